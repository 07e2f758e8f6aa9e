import math

from django.conf import settings
from rest_framework import serializers

from corpora.domain import IngestConfig
from corpora.utils import MIN_SIDE
from scoring.domain import ScoringConfig, Thresholds
from targets.domain import TargetOptions
from translator.domain import Backbone, TrainConfig

from .config import EvaluationConfig, RunConfig


class IngestSerializer(serializers.Serializer):
    side = serializers.IntegerField(min_value=MIN_SIDE)
    workers = serializers.IntegerField(min_value=1)
    palette = serializers.ListField(child=serializers.CharField(), allow_null=True, allow_empty=False, default=None)


class TargetOptionsSerializer(serializers.Serializer):
    oracle = serializers.ChoiceField(choices=[])
    oracle_miss_rate = serializers.FloatField(min_value=0.0, max_value=1.0)
    flow_estimator = serializers.ChoiceField(choices=[])
    masking = serializers.BooleanField()
    flow_cap = serializers.FloatField(allow_null=True, default=None)
    flow_cap_percentile = serializers.FloatField(min_value=0.0, max_value=100.0)
    flow_cap_headroom = serializers.FloatField(min_value=1.0)

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.fields['oracle'].choices = sorted(settings.TRANSLAD_SEGMENTATION_ORACLES)
        self.fields['flow_estimator'].choices = sorted(settings.TRANSLAD_FLOW_ESTIMATORS)

    def validate_flow_cap(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError('Flow cap must be positive.')
        return value


class TrainConfigSerializer(serializers.Serializer):
    epochs = serializers.IntegerField(min_value=0)
    batch_size = serializers.IntegerField(min_value=1)
    lr0 = serializers.FloatField()
    lr_halve_every = serializers.IntegerField(min_value=1)
    grid_k = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(min_value=0)
    pretrained = serializers.BooleanField()
    backbone = serializers.ChoiceField(choices=Backbone.values)

    def validate_lr0(self, value):
        if value <= 0:
            raise serializers.ValidationError('Learning rate must be positive.')
        return value

    def validate_grid_k(self, value):
        if math.isqrt(value) ** 2 != value:
            raise serializers.ValidationError('Patch count must be a perfect square.')
        return value


class ThresholdsSerializer(serializers.Serializer):
    appearance = serializers.FloatField(allow_null=True, default=None)
    motion = serializers.FloatField(allow_null=True, default=None)


class ScoringSerializer(serializers.Serializer):
    refine = serializers.BooleanField()
    kernel_size = serializers.IntegerField(min_value=1)
    iterations = serializers.IntegerField(min_value=1)
    window = serializers.IntegerField(min_value=1)
    polyorder = serializers.IntegerField(min_value=0)
    thresholds = ThresholdsSerializer()
    batch_size = serializers.IntegerField(min_value=1)

    def validate_kernel_size(self, value):
        if value % 2 == 0:
            raise serializers.ValidationError('Kernel size must be odd.')
        return value

    def validate_window(self, value):
        if value % 2 == 0:
            raise serializers.ValidationError('Smoothing window must be odd.')
        return value

    def validate(self, data):
        if data['polyorder'] >= data['window']:
            raise serializers.ValidationError({'polyorder': 'Polyorder must be below the smoothing window.'})
        return data


class EvaluationSerializer(serializers.Serializer):
    per_clip_normalize = serializers.BooleanField()
    macro = serializers.BooleanField()


class RunConfigSerializer(serializers.Serializer):
    run_dir = serializers.CharField()
    corpus = serializers.CharField(allow_null=True, default=None)
    test_corpus = serializers.CharField(allow_null=True, default=None)
    scene = serializers.CharField(allow_null=True, default=None)
    seed = serializers.IntegerField(min_value=0)
    ingest = IngestSerializer()
    targets = TargetOptionsSerializer()
    appearance = TrainConfigSerializer()
    motion = TrainConfigSerializer()
    scoring = ScoringSerializer()
    evaluation = EvaluationSerializer()

    def create(self, validated_data):
        scoring = dict(validated_data['scoring'])
        scoring['thresholds'] = Thresholds(**scoring['thresholds'])
        return RunConfig(
            run_dir=validated_data['run_dir'],
            corpus=validated_data['corpus'],
            test_corpus=validated_data['test_corpus'],
            scene=validated_data['scene'],
            seed=validated_data['seed'],
            ingest=IngestConfig(**validated_data['ingest']),
            targets=TargetOptions(**validated_data['targets']),
            appearance=TrainConfig(**validated_data['appearance']),
            motion=TrainConfig(**validated_data['motion']),
            scoring=ScoringConfig(**scoring),
            evaluation=EvaluationConfig(**validated_data['evaluation']),
        )
