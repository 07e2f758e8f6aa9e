from pathlib import Path

import yaml
from rest_framework import serializers

from corpora.domain import Split

from .domain import SHAPES, ActorSpec, AnomalyInjection, AnomalyKind, SceneSpec
from .renderer import build_tracks, clip_rng, out_of_canvas


class PointField(serializers.ListField):
    child = serializers.FloatField()

    def __init__(self, **kwargs):
        kwargs.setdefault('min_length', 2)
        kwargs.setdefault('max_length', 2)
        super().__init__(**kwargs)


class ActorSerializer(serializers.Serializer):
    shape = serializers.ChoiceField(choices=SHAPES)
    size = serializers.FloatField(min_value=2.0)
    speed = serializers.FloatField(min_value=0.0)
    heading = serializers.FloatField(required=False, allow_null=True, default=None)
    start = PointField(required=False, allow_null=True, default=None)


class AnomalySerializer(serializers.Serializer):
    clip = serializers.IntegerField(min_value=0)
    kind = serializers.ChoiceField(choices=[AnomalyKind.CLASS, AnomalyKind.SPEED])
    start = serializers.IntegerField(min_value=0)
    end = serializers.IntegerField(min_value=1)
    shape = serializers.ChoiceField(choices=SHAPES, required=False, allow_null=True, default=None)
    size = serializers.FloatField(min_value=2.0, default=12.0)
    speed = serializers.FloatField(min_value=0.0, default=2.0)
    heading = serializers.FloatField(required=False, allow_null=True, default=None)
    position = PointField(required=False, allow_null=True, default=None)
    actor = serializers.IntegerField(min_value=0, required=False, allow_null=True, default=None)
    multiplier = serializers.FloatField(min_value=0.0, default=3.0)

    def validate(self, data):
        if data['end'] <= data['start']:
            raise serializers.ValidationError({'end': 'Anomaly must end after it starts.'})
        if data['kind'] == AnomalyKind.CLASS and not data.get('shape'):
            raise serializers.ValidationError({'shape': 'Class anomalies need a shape.'})
        if data['kind'] == AnomalyKind.SPEED:
            if data.get('actor') is None:
                raise serializers.ValidationError({'actor': 'Speed anomalies need the index of a normal actor.'})
            if data['multiplier'] == 1.0:
                raise serializers.ValidationError({'multiplier': 'A multiplier of 1 is not an anomaly.'})
        return data


class SceneSpecSerializer(serializers.Serializer):
    name = serializers.CharField(max_length=64)
    canvas = serializers.IntegerField(min_value=16, default=224)
    seed = serializers.IntegerField(min_value=0, default=0)
    noise = serializers.FloatField(min_value=0.0, default=0.01)
    wrap = serializers.BooleanField(default=True)
    frames_per_clip = serializers.IntegerField(min_value=2, default=60)
    train_clips = serializers.IntegerField(min_value=1, default=4)
    test_clips = serializers.IntegerField(min_value=1, default=4)
    palette = serializers.ListField(child=serializers.ChoiceField(choices=SHAPES), allow_empty=False)
    normal_speed = PointField(default=[1.0, 3.0])
    actors = ActorSerializer(many=True, allow_empty=False)
    anomalies = AnomalySerializer(many=True, required=False, default=list)

    def validate(self, data):
        palette = data['palette']
        if len(set(palette)) != len(palette):
            raise serializers.ValidationError({'palette': 'Palette classes must be unique.'})

        low, high = data['normal_speed']
        if low > high:
            raise serializers.ValidationError({'normal_speed': 'Band must be [low, high].'})
        normal_shapes = set()
        for i, actor in enumerate(data['actors']):
            if actor['shape'] not in palette:
                raise serializers.ValidationError({'actors': f"Actor {i} shape {actor['shape']} is not in the palette."})
            if not low <= actor['speed'] <= high:
                raise serializers.ValidationError(
                    {'actors': f"Actor {i} speed {actor['speed']} is outside the normal band [{low}, {high}]."}
                )
            normal_shapes.add(actor['shape'])

        windows = {}
        for i, anomaly in enumerate(data.get('anomalies') or []):
            where = f'Anomaly {i}'
            if anomaly['clip'] >= data['test_clips']:
                raise serializers.ValidationError({'anomalies': f"{where} targets test clip {anomaly['clip']}, which does not exist."})
            if anomaly['end'] > data['frames_per_clip']:
                raise serializers.ValidationError({'anomalies': f'{where} ends after the last frame.'})
            if anomaly['kind'] == AnomalyKind.CLASS:
                if anomaly['shape'] not in palette:
                    raise serializers.ValidationError({'anomalies': f"{where} shape {anomaly['shape']} is not in the palette."})
                if anomaly['shape'] in normal_shapes:
                    raise serializers.ValidationError({'anomalies': f"{where} shape {anomaly['shape']} is a normal class."})
            else:
                if anomaly['actor'] >= len(data['actors']):
                    raise serializers.ValidationError({'anomalies': f"{where} refers to missing actor {anomaly['actor']}."})
                boosted = data['actors'][anomaly['actor']]['speed'] * anomaly['multiplier']
                if low <= boosted <= high:
                    raise serializers.ValidationError({'anomalies': f'{where} speed {boosted} stays inside the normal band.'})
            for start, end in windows.get(anomaly['clip'], []):
                if anomaly['start'] < end and start < anomaly['end']:
                    raise serializers.ValidationError({'anomalies': f"{where} overlaps another anomaly of clip {anomaly['clip']}."})
            windows.setdefault(anomaly['clip'], []).append((anomaly['start'], anomaly['end']))

        if not data['wrap']:
            self._check_trajectories(data)
        return data

    def _check_trajectories(self, data):
        for i, item in enumerate(data['actors'] + list(data.get('anomalies') or [])):
            is_class = item.get('kind') == AnomalyKind.CLASS
            if 'kind' in item and not is_class:
                continue
            if item.get('heading') is None or item.get('start' if not is_class else 'position') is None:
                raise serializers.ValidationError(
                    {'wrap': f'Without wrap, actor {i} needs an explicit heading and start position.'}
                )
        spec = self.build(data)
        for split, count in ((Split.TRAIN, spec.train_clips), (Split.TEST, spec.test_clips)):
            for clip_index in range(count):
                tracks, _ = build_tracks(spec, split, clip_index, clip_rng(spec, split, clip_index))
                escaped = out_of_canvas(spec, tracks)
                if escaped is not None:
                    track, frame = escaped
                    raise serializers.ValidationError(
                        {'wrap': f'Actor {track} leaves the canvas at frame {frame} of {split} clip {clip_index}.'}
                    )

    @staticmethod
    def build(data) -> SceneSpec:
        return SceneSpec(
            name=data['name'],
            palette=list(data['palette']),
            actors=[ActorSpec(**{**a, 'start': tuple(a['start']) if a.get('start') else None}) for a in data['actors']],
            anomalies=[
                AnomalyInjection(**{**a, 'position': tuple(a['position']) if a.get('position') else None})
                for a in data.get('anomalies') or []
            ],
            canvas=data['canvas'],
            seed=data['seed'],
            noise=data['noise'],
            wrap=data['wrap'],
            frames_per_clip=data['frames_per_clip'],
            train_clips=data['train_clips'],
            test_clips=data['test_clips'],
            normal_speed=tuple(data['normal_speed']),
        )

    def create(self, validated_data):
        return self.build(validated_data)


def load_scene(path) -> SceneSpec:
    """Read and validate a YAML scene file; raises serializers.ValidationError."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    serializer = SceneSpecSerializer(data=data)
    serializer.is_valid(raise_exception=True)
    return serializer.save()


def dump_scene(spec: SceneSpec) -> str:
    data = SceneSpecSerializer(instance=spec).data
    return yaml.safe_dump(_plain(data), sort_keys=False)


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, str):
        return str(value)
    return value
