"""The twelve augmentation actions and the resampling they are built on.

Images are 2-D float64 arrays with values in [0, 1]; masks are 2-D uint8
arrays with values in {0, 1}. Coordinates are (x, y) = (column, row) with the
row axis pointing down. Every function is pure: inputs are never modified and
any randomness comes from the explicit ``seed`` argument.
"""
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ContractViolation, DegenerateCropError


class Action(IntEnum):
    HF = 0   # horizontal flip
    RT = 1   # rotate
    CL = 2   # crop from the left
    CR = 3   # crop from the right
    CU = 4   # crop from the top
    CD = 5   # crop from the bottom
    WP = 6   # piecewise warp
    ZM = 7   # centre zoom
    AN = 8   # additive gaussian noise
    LT = 9   # brighten
    DK = 10  # darken
    TM = 11  # terminate the episode


N_ACTIONS = len(Action)
GEOMETRIC = frozenset({Action.HF, Action.RT, Action.CL, Action.CR, Action.CU,
                       Action.CD, Action.WP, Action.ZM})
PHOTOMETRIC = frozenset({Action.AN, Action.LT, Action.DK})
_CROP_SIDES = {Action.CL: "left", Action.CR: "right", Action.CU: "up", Action.CD: "down"}

FILL_VALUE = 0.0


@dataclass(frozen=True)
class AugmentParams:
    """Magnitudes of the actions.

    ``crop_step`` and ``warp_sigma`` default to ``None``, meaning "derive from
    the image size": the crop step is 20 px at 512 px scaled linearly (at least
    1 px), and the warp jitter is 3% of the shorter side.
    """

    rotate_degrees: float = 30.0
    crop_step: int | None = None
    zoom_factor: float = 1.1
    warp_grid: int = 4
    warp_sigma: float | None = None
    noise_std: float = 0.05
    brightness: float = 0.1

    def crop_step_for(self, length):
        if self.crop_step is not None:
            return int(self.crop_step)
        return max(1, int(np.floor(20.0 * length / 512.0 + 0.5)))

    def warp_sigma_for(self, height, width):
        if self.warp_sigma is not None:
            return float(self.warp_sigma)
        return 0.03 * min(height, width)


DEFAULT_PARAMS = AugmentParams()


@dataclass(frozen=True)
class DisplacementField:
    dx: np.ndarray
    dy: np.ndarray

    @property
    def shape(self):
        return self.dx.shape


def _check_pair(image, mask):
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.uint8)
    if image.ndim != 2 or image.shape != mask.shape:
        raise ContractViolation(
            f"image {image.shape} and mask {mask.shape} must be equal 2-D shapes")
    return image, mask


# -- resampling -------------------------------------------------------------

def remap_bilinear(image, src_x, src_y):
    """Sample ``image`` at fractional (src_x, src_y); neighbours outside the grid read as 0."""
    h, w = image.shape
    x0 = np.floor(src_x)
    y0 = np.floor(src_y)
    fx = src_x - x0
    fy = src_y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    def tap(yy, xx):
        ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        vals = image[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(ok, vals, FILL_VALUE)

    top = (1.0 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)
    bottom = (1.0 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1)
    return (1.0 - fy) * top + fy * bottom


def remap_nearest(mask, src_x, src_y):
    """Nearest-neighbour lookup (ties round up); outside the grid reads as 0."""
    h, w = mask.shape
    xi = np.floor(src_x + 0.5).astype(np.int64)
    yi = np.floor(src_y + 0.5).astype(np.int64)
    ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    vals = mask[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
    return np.where(ok, vals, 0).astype(np.uint8)


def sample_bilinear(image, x, y):
    """Bilinear intensity at a single real-valued point (x = column, y = row)."""
    image = np.asarray(image, dtype=np.float64)
    return float(remap_bilinear(image, np.array([float(x)]), np.array([float(y)]))[0])


def _grid(h, w):
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(np.float64), ys.astype(np.float64)


def _resize_window(image, mask, x_start, x_len, y_start, y_len):
    """Stretch the window [start, start + len) on each axis back to full size.

    Pixel-centre mapping; source coordinates are clamped to the window, which
    is what resizing the cropped sub-image on its own would do.
    """
    h, w = image.shape
    xs = x_start + (np.arange(w) + 0.5) * (x_len / w) - 0.5
    ys = y_start + (np.arange(h) + 0.5) * (y_len / h) - 0.5
    xs = np.clip(xs, x_start, x_start + x_len - 1.0)
    ys = np.clip(ys, y_start, y_start + y_len - 1.0)
    src_x = np.broadcast_to(xs[None, :], (h, w))
    src_y = np.broadcast_to(ys[:, None], (h, w))
    return remap_bilinear(image, src_x, src_y), remap_nearest(mask, src_x, src_y)


# -- geometric ops ----------------------------------------------------------

def hflip(image, mask):
    image, mask = _check_pair(image, mask)
    return image[:, ::-1].copy(), mask[:, ::-1].copy()


def rotate(image, mask, degrees):
    """Counter-clockwise rotation (as displayed) about ((W-1)/2, (H-1)/2)."""
    image, mask = _check_pair(image, mask)
    h, w = image.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    xs, ys = _grid(h, w)
    u, v = xs - cx, ys - cy
    # inverse of the forward map u' = c*u + s*v, v' = -s*u + c*v
    src_x = cx + (c * u - s * v)
    src_y = cy + (s * u + c * v)
    return remap_bilinear(image, src_x, src_y), remap_nearest(mask, src_x, src_y)


def crop_directional(image, mask, side, step):
    image, mask = _check_pair(image, mask)
    h, w = image.shape
    step = int(step)
    if step < 0:
        raise ContractViolation(f"crop step must be non-negative, got {step}")
    length = w if side in ("left", "right") else h
    if step >= length:
        raise DegenerateCropError(f"crop step {step} leaves nothing of a {length}-px axis")
    n = length - step
    if side == "left":
        return _resize_window(image, mask, float(step), float(n), 0.0, float(h))
    if side == "right":
        return _resize_window(image, mask, 0.0, float(n), 0.0, float(h))
    if side == "up":
        return _resize_window(image, mask, 0.0, float(w), float(step), float(n))
    if side == "down":
        return _resize_window(image, mask, 0.0, float(w), 0.0, float(n))
    raise ContractViolation(f"unknown crop side {side!r}")


def zoom_center(image, mask, factor):
    """Centre crop of (H/factor, W/factor) resized back to (H, W)."""
    image, mask = _check_pair(image, mask)
    if not factor >= 1.0:
        raise ContractViolation(f"zoom factor must be >= 1, got {factor}")
    h, w = image.shape
    x_len, y_len = w / factor, h / factor
    return _resize_window(image, mask, (w - x_len) / 2.0, x_len, (h - y_len) / 2.0, y_len)


def displacement_field(height, width, grid, sigma, seed):
    """Jitter a grid x grid lattice by N(0, sigma^2) truncated at 3 sigma and
    interpolate it bilinearly to every pixel."""
    if grid < 2:
        raise ContractViolation(f"warp grid must be >= 2, got {grid}")
    if sigma < 0:
        raise ContractViolation(f"warp sigma must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((2, grid, grid))
    bad = np.abs(z) > 3.0
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > 3.0
    ctrl = sigma * z

    def axis_weights(n):
        pos = np.arange(n) * ((grid - 1) / (n - 1)) if n > 1 else np.zeros(1)
        i0 = np.minimum(np.floor(pos).astype(np.int64), grid - 2)
        return i0, pos - i0

    ix, fx = axis_weights(width)
    iy, fy = axis_weights(height)
    fx, fy = fx[None, :], fy[:, None]

    def interp(c):
        a = c[iy[:, None], ix[None, :]]
        b = c[iy[:, None], ix[None, :] + 1]
        d = c[iy[:, None] + 1, ix[None, :]]
        e = c[iy[:, None] + 1, ix[None, :] + 1]
        return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * d + fx * e)

    return DisplacementField(dx=interp(ctrl[0]), dy=interp(ctrl[1]))


def warp_piecewise(image, mask, grid, sigma, seed):
    image, mask = _check_pair(image, mask)
    h, w = image.shape
    field = displacement_field(h, w, grid, sigma, seed)
    xs, ys = _grid(h, w)
    src_x, src_y = xs + field.dx, ys + field.dy
    return remap_bilinear(image, src_x, src_y), remap_nearest(mask, src_x, src_y)


# -- photometric ops --------------------------------------------------------

def add_gaussian_noise(image, std, seed):
    if std < 0:
        raise ContractViolation(f"noise std must be >= 0, got {std}")
    image = np.asarray(image, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return np.clip(image + rng.normal(0.0, std, image.shape), 0.0, 1.0)


def adjust_brightness(image, delta):
    image = np.asarray(image, dtype=np.float64)
    return np.clip(image + delta, 0.0, 1.0)


# -- dispatch ---------------------------------------------------------------

def apply_action(image, mask, action, seed=0, params=DEFAULT_PARAMS):
    """Apply one action to an (image, mask) pair.

    Returns ``(image, mask, terminal)``. Geometric actions move both arrays,
    photometric ones only the image, and TM hands the inputs back unchanged
    with ``terminal=True``. ``seed`` only matters for AN and WP.
    """
    image, mask = _check_pair(image, mask)
    action = Action(action)
    h, w = image.shape
    if action is Action.TM:
        return image, mask, True
    if action is Action.HF:
        out = hflip(image, mask)
    elif action is Action.RT:
        out = rotate(image, mask, params.rotate_degrees)
    elif action in _CROP_SIDES:
        side = _CROP_SIDES[action]
        step = params.crop_step_for(w if side in ("left", "right") else h)
        out = crop_directional(image, mask, side, step)
    elif action is Action.WP:
        out = warp_piecewise(image, mask, params.warp_grid, params.warp_sigma_for(h, w), seed)
    elif action is Action.ZM:
        out = zoom_center(image, mask, params.zoom_factor)
    elif action is Action.AN:
        out = add_gaussian_noise(image, params.noise_std, seed), mask.copy()
    elif action is Action.LT:
        out = adjust_brightness(image, params.brightness), mask.copy()
    else:
        out = adjust_brightness(image, -params.brightness), mask.copy()
    return out[0], out[1], False
