"""Rendering, annotation and the on-disk episode format."""

from .episode import (CAMERAS, EpisodeRecord, EpisodeWriter, dumps, read_episode,
                      validate_episode, write_episode)
from .record import Recorder, annotate, episode_meta, prompt_assets, task_annotation
from .render import (bounding_boxes, default_cameras, render_and_boxes, render_frame,
                     render_layout, render_object_asset, render_texture_asset, render_with_ids)
from .tensors import (EpisodeFormatError, IntegrityError, decode_ppm, decode_tensor, encode_ppm,
                      encode_tensor, read_ppm, read_tensor, write_ppm, write_tensor)

__all__ = [
    "CAMERAS", "EpisodeRecord", "EpisodeWriter", "dumps", "read_episode", "validate_episode",
    "write_episode", "Recorder", "annotate", "episode_meta", "prompt_assets", "task_annotation",
    "bounding_boxes", "default_cameras", "render_and_boxes", "render_frame", "render_layout",
    "render_object_asset", "render_texture_asset", "render_with_ids", "EpisodeFormatError",
    "IntegrityError", "decode_ppm", "decode_tensor", "encode_ppm", "encode_tensor", "read_ppm",
    "read_tensor", "write_ppm", "write_tensor",
]
