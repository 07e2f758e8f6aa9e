import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'TRANSLAD_root.settings')
django.setup()
