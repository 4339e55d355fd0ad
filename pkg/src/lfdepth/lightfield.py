"""4D light fields, camera configuration, EPI slicing and disparity fields.

Samples are stored as one dense array indexed ``(v, u, y, x, channel)``: ``v``
is the angular row, ``u`` the angular column, ``(y, x)`` the pixel. View
``(v, u)`` of a ``V x U`` array has the row-major index ``v * U + u``.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DataFormatError, DimensionMismatchError

log = logging.getLogger(__name__)

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.flags.writeable:
        a = a.view()
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LightField4D:
    """Dense light field; ``samples`` has shape ``(V, U, Y, X, C)`` with ``C in {1, 3}``."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 5:
            raise ValueError(f"samples must be 5D (v, u, y, x, c), got shape {s.shape}")
        if min(s.shape[:4]) < 1:
            raise ValueError(f"all light-field dimensions must be >= 1, got {s.shape}")
        if s.shape[4] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {s.shape[4]}")
        if not np.all((s >= 0) & (s <= 1)):
            raise ValueError("samples must lie in [0, 1]")
        object.__setattr__(self, "samples", _readonly(s))

    @property
    def views_v(self) -> int:
        return self.samples.shape[0]

    @property
    def views_u(self) -> int:
        return self.samples.shape[1]

    @property
    def height_y(self) -> int:
        return self.samples.shape[2]

    @property
    def width_x(self) -> int:
        return self.samples.shape[3]

    @property
    def channels(self) -> int:
        return self.samples.shape[4]

    @property
    def center(self) -> tuple[int, int]:
        """``(v, u)`` of the default reference view."""
        return self.views_v // 2, self.views_u // 2

    def view(self, v: int, u: int) -> np.ndarray:
        """Sub-aperture image ``(Y, X, C)``."""
        return self.samples[v, u]


@dataclass(frozen=True)
class CameraConfig:
    baseline: float = 1.0
    focal_length: float = 1.0
    sensor_width: float = 1.0
    disp_min: float = -np.inf
    disp_max: float = np.inf
    center_u: int | None = None
    center_v: int | None = None
    plane_separation: float | None = None

    def __post_init__(self):
        if not self.disp_min < self.disp_max:
            raise ConfigError("disp_min must be < disp_max", key="disp_min")
        if not self.baseline > 0:
            raise ConfigError("must be > 0", key="baseline")
        if not self.focal_length > 0:
            raise ConfigError("must be > 0", key="focal_length")
        if self.plane_separation is not None and not self.plane_separation > 0:
            raise ConfigError("must be > 0", key="plane_separation")

    def resolved_center(self, lf: LightField4D) -> tuple[int, int]:
        """``(v, u)`` reference view: the configured override or the array center."""
        v = lf.views_v // 2 if self.center_v is None else self.center_v
        u = lf.views_u // 2 if self.center_u is None else self.center_u
        if not (0 <= v < lf.views_v and 0 <= u < lf.views_u):
            raise ConfigError(f"center ({v}, {u}) outside the {lf.views_v}x{lf.views_u} array",
                              key="center_u")
        return v, u

    @property
    def depth_scale(self) -> float:
        """Plane separation ``A`` used for disparity-to-depth conversion."""
        return self.focal_length if self.plane_separation is None else self.plane_separation


@dataclass(frozen=True)
class EPISlice:
    """EPI; ``data`` is spatial axis x angular axis."""

    orientation: str
    fixed_spatial: int
    fixed_angular: int
    data: np.ndarray


@dataclass(frozen=True, eq=False)
class DisparityField:
    disparity: np.ndarray
    confidence: np.ndarray | None = None
    valid_mask: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.disparity)
        if d.ndim != 2:
            raise ValueError(f"disparity must be 2D, got shape {d.shape}")
        if not np.issubdtype(d.dtype, np.floating):
            d = d.astype(float)
        c = np.ones(d.shape) if self.confidence is None else np.asarray(self.confidence, dtype=float)
        v = np.isfinite(d) if self.valid_mask is None else np.asarray(self.valid_mask, dtype=bool)
        if c.shape != d.shape or v.shape != d.shape:
            raise ValueError("disparity, confidence and valid_mask must share one shape")
        if not np.all((c >= 0) & (c <= 1)):
            raise ValueError("confidence must lie in [0, 1]")
        if not np.all(np.isfinite(d[v])):
            raise ValueError("disparity must be finite wherever valid_mask is true")
        object.__setattr__(self, "disparity", _readonly(d))
        object.__setattr__(self, "confidence", _readonly(c))
        object.__setattr__(self, "valid_mask", _readonly(v))

    @property
    def height(self) -> int:
        return self.disparity.shape[0]

    @property
    def width(self) -> int:
        return self.disparity.shape[1]


# ---------------------------------------------------------------- config files

# Keys of the benchmark's parameters.cfg mapped onto CameraConfig fields.
CONFIG_ALIASES = {
    "baseline_mm": "baseline",
    "focal_length_mm": "focal_length",
    "sensor_size_mm": "sensor_width",
}
_FLOAT_KEYS = {"baseline", "focal_length", "sensor_width", "disp_min", "disp_max", "plane_separation"}
_INT_KEYS = {"center_u", "center_v"}
# Keys that describe the array rather than the camera; consumed by the loader.
LAYOUT_KEYS = {"num_cams_x": "views_u", "num_cams_y": "views_v", "views_u": "views_u",
               "views_v": "views_v"}


def read_key_values(path) -> dict[str, str]:
    """Read ``key = value`` lines; ``[section]`` headers and ``#``/``;`` comments are skipped.

    Keys are lower-cased; later occurrences win.
    """
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, strict=False,
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        text = path.read_text()
    except UnicodeDecodeError as e:
        raise ConfigError(f"not a text file ({e})", path) from e
    try:
        parser.read_string("[__top__]\n" + text, source=str(path))
    except configparser.Error as e:
        raise ConfigError(str(e).splitlines()[0], path) from e
    out: dict[str, str] = {}
    for section in parser.sections():
        for k, v in parser.items(section):
            out[k.strip().lower()] = v.strip()
    return out


def camera_config_from_mapping(values: dict[str, str], path=None) -> CameraConfig:
    kwargs: dict = {}
    for raw_key, raw in values.items():
        key = CONFIG_ALIASES.get(raw_key, raw_key)
        if key in _FLOAT_KEYS:
            conv = float
        elif key in _INT_KEYS:
            conv = int
        elif raw_key in LAYOUT_KEYS:
            continue
        else:
            log.warning("ignoring unknown config key %r%s", raw_key, f" in {path}" if path else "")
            continue
        try:
            kwargs[key] = conv(raw)
        except ValueError as e:
            raise ConfigError(f"cannot parse {raw!r}", path, key=raw_key) from e
    try:
        return CameraConfig(**kwargs)
    except ConfigError as e:
        raise ConfigError(str(e), path) from e


def load_camera_config(path) -> CameraConfig:
    return camera_config_from_mapping(read_key_values(path), path)


# ---------------------------------------------------------------- image loading

@dataclass(frozen=True)
class ViewLayout:
    """How sub-aperture images are named inside a scene directory.

    ``pattern`` is a :meth:`str.format` template receiving ``index`` (row-major
    ``v * U + u``), ``u`` and ``v``. ``views_u``/``views_v`` left as ``None``
    are taken from the config file, or from a square file count.
    """

    pattern: str = "input_Cam{index:03d}.png"
    views_u: int | None = None
    views_v: int | None = None
    config_name: str = "parameters.cfg"


def read_image(path) -> np.ndarray:
    """Image as float ``(Y, X, C)`` in ``[0, 1]``; 8-bit / 255, 16-bit / 65535."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode in ("P", "LA", "RGBA", "CMYK", "YCbCr"):
                img = img.convert("RGB" if mode != "LA" else "L")
                mode = img.mode
            a = np.asarray(img)
    except (OSError, SyntaxError) as e:
        if isinstance(e, FileNotFoundError):
            raise
        raise DataFormatError(f"unreadable image ({e})", path) from e
    if mode == "1":
        a = a.astype(float)
    elif a.dtype == np.uint8:
        a = a / 255.0
    elif a.dtype in (np.uint16, np.dtype(">u2"), np.dtype("<u2")) or mode.startswith("I;16"):
        a = a.astype(float) / 65535.0
    elif mode == "I":
        # Pillow widens 16-bit PNGs to 32-bit integer mode
        if a.min() < 0 or a.max() > 65535:
            raise DataFormatError("integer image outside the 16-bit range", path)
        a = a.astype(float) / 65535.0
    elif mode == "F":
        a = a.astype(float)
    else:
        raise DataFormatError(f"unsupported image mode {mode}", path)
    if a.ndim == 2:
        a = a[..., None]
    if a.shape[2] not in (1, 3):
        raise DataFormatError(f"unsupported channel count {a.shape[2]}", path)
    return a


def _grid_from_config(values: dict[str, str]) -> tuple[int | None, int | None]:
    u = v = None
    for k, raw in values.items():
        target = LAYOUT_KEYS.get(k)
        if target is None:
            continue
        try:
            n = int(raw)
        except ValueError as e:
            raise ConfigError(f"cannot parse {raw!r}", key=k) from e
        if target == "views_u":
            u = n
        else:
            v = n
    return u, v


def load_lightfield(directory, layout: ViewLayout | None = None, config_path=None):
    """Load a scene directory; returns ``(LightField4D, CameraConfig)``.

    ``config_path`` overrides the config file inside the directory. A missing
    config file yields default camera parameters.
    """
    layout = layout or ViewLayout()
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"scene directory not found: {directory}")
    cfg_path = Path(config_path) if config_path is not None else directory / layout.config_name
    values: dict[str, str] = {}
    if cfg_path.exists():
        values = read_key_values(cfg_path)
    elif config_path is not None:
        raise FileNotFoundError(f"config file not found: {cfg_path}")
    cfg = camera_config_from_mapping(values, cfg_path)

    cu, cv = _grid_from_config(values)
    U = layout.views_u or cu
    V = layout.views_v or cv
    if U is None or V is None:
        count = 0
        while (directory / layout.pattern.format(index=count, u=count, v=0)).exists():
            count += 1
        side = int(round(np.sqrt(count)))
        if count == 0 or side * side != count:
            raise DataFormatError(
                f"cannot infer the view grid from {count} files matching {layout.pattern!r}; "
                "set views_u/views_v", directory)
        U = U or side
        V = V or count // U
    if U < 1 or V < 1:
        raise ConfigError("view grid must be at least 1x1", cfg_path, key="views_u")

    samples = None
    first = None
    for v in range(V):
        for u in range(U):
            path = directory / layout.pattern.format(index=v * U + u, u=u, v=v)
            if not path.exists():
                raise FileNotFoundError(f"missing view file for (v={v}, u={u}): {path}")
            img = read_image(path)
            if samples is None:
                samples = np.empty((V, U) + img.shape)
                first = path
            elif img.shape != samples.shape[2:]:
                raise DimensionMismatchError(
                    f"image shape {img.shape} differs from {samples.shape[2:]} of {first.name}", path)
            samples[v, u] = img
    return LightField4D(samples), cfg


def save_view(path, image: np.ndarray) -> None:
    """Write a float image in ``[0, 1]`` as 8-bit PNG."""
    a = np.clip(np.asarray(image, dtype=float), 0, 1)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[..., 0]
    Image.fromarray(np.round(a * 255).astype(np.uint8)).save(path)


def save_lightfield(directory, lf: LightField4D, layout: ViewLayout | None = None,
                    cfg: CameraConfig | None = None) -> None:
    """Write ``lf`` in the layout :func:`load_lightfield` reads (8-bit PNGs)."""
    layout = layout or ViewLayout()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for v in range(lf.views_v):
        for u in range(lf.views_u):
            save_view(directory / layout.pattern.format(index=v * lf.views_u + u, u=u, v=v),
                      lf.samples[v, u])
    lines = [f"views_u = {lf.views_u}", f"views_v = {lf.views_v}"]
    if cfg is not None:
        for k, val in vars(cfg).items():
            if val is not None and np.isfinite(val):
                lines.append(f"{k} = {val}")
    (directory / layout.config_name).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- transforms

def to_grayscale(lf: LightField4D) -> LightField4D:
    """Single-channel light field; RGB uses fixed luma weights (0.299, 0.587, 0.114)."""
    if lf.channels == 1:
        return lf
    gray = lf.samples @ np.asarray(LUMA_WEIGHTS)
    return LightField4D(np.clip(gray, 0.0, 1.0)[..., None])


def _require_gray(lf: LightField4D) -> None:
    if lf.channels != 1:
        raise ValueError("EPI extraction needs a grayscale light field (see to_grayscale)")


def extract_epi_horizontal(lf: LightField4D, y_star: int, v_star: int) -> EPISlice:
    """``X x U`` slice with entry ``(x, u) = L(u, v*, x, y*)`` (a view, no copy)."""
    _require_gray(lf)
    if not 0 <= y_star < lf.height_y:
        raise IndexError(f"y_star={y_star} outside [0, {lf.height_y})")
    if not 0 <= v_star < lf.views_v:
        raise IndexError(f"v_star={v_star} outside [0, {lf.views_v})")
    return EPISlice("horizontal", y_star, v_star, lf.samples[v_star, :, y_star, :, 0].T)


def extract_epi_vertical(lf: LightField4D, x_star: int, u_star: int) -> EPISlice:
    """``Y x V`` slice with entry ``(y, v) = L(u*, v, x*, y)`` (a view, no copy)."""
    _require_gray(lf)
    if not 0 <= x_star < lf.width_x:
        raise IndexError(f"x_star={x_star} outside [0, {lf.width_x})")
    if not 0 <= u_star < lf.views_u:
        raise IndexError(f"u_star={u_star} outside [0, {lf.views_u})")
    return EPISlice("vertical", x_star, u_star, lf.samples[:, u_star, :, x_star, 0].T)


def horizontal_epi_stack(lf: LightField4D, v_star: int) -> np.ndarray:
    """All horizontal EPIs at ``v*`` as a ``(Y, X, U)`` array; ``[y]`` is the EPI at ``y*=y``."""
    _require_gray(lf)
    return lf.samples[v_star, :, :, :, 0].transpose(1, 2, 0)


def vertical_epi_stack(lf: LightField4D, u_star: int) -> np.ndarray:
    """All vertical EPIs at ``u*`` as a ``(X, Y, V)`` array; ``[x]`` is the EPI at ``x*=x``."""
    _require_gray(lf)
    return lf.samples[:, u_star, :, :, 0].transpose(2, 1, 0)


__all__ = [
    "LightField4D", "CameraConfig", "EPISlice", "DisparityField", "ViewLayout",
    "load_lightfield", "save_lightfield", "load_camera_config", "read_key_values",
    "read_image", "to_grayscale", "extract_epi_horizontal", "extract_epi_vertical",
    "horizontal_epi_stack", "vertical_epi_stack"
]
