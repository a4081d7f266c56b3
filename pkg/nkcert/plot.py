"""SVG picture of the planar fan and the fundamental domain (s = 2, b = 1)."""
from dataclasses import dataclass
from typing import Optional

import drawsvg as draw
import numpy as np
from loguru import logger

from nkcert.common import UnsupportedDimension
from nkcert.unit_lattice import SubgroupW, labeled


CANVAS = 480
MARGIN = 24
DIGITS = 4


@dataclass(frozen=True)
class Theme:
    background: str = "#ffffff"
    axis: str = "#1e293b"
    ray: str = "#64748b"
    strip: str = "#e2e8f0"
    d1: str = "#3b82f6"
    d2: str = "#f59e0b"
    text: str = "#1e293b"


DEFAULT_THEME = Theme()


class Frame:
    """Maps the box [0, X] x [-X, X] onto the canvas, y pointing up."""

    def __init__(self, extent: float):
        self.extent = extent
        self.scale = (CANVAS - 2 * MARGIN) / (2 * extent)

    @property
    def width(self) -> float:
        return self.extent * self.scale + 2 * MARGIN

    @property
    def height(self) -> float:
        return float(CANVAS)

    def __call__(self, x: float, y: float) -> tuple[float, float]:
        px = MARGIN + x * self.scale
        py = MARGIN + (self.extent - y) * self.scale
        return round(px, DIGITS), round(py, DIGITS)

    def flat(self, points) -> list[float]:
        return [c for p in points for c in self(*p)]


def ray_exit(direction: np.ndarray, extent: float) -> tuple[float, float]:
    a, b = direction
    t = extent / max(abs(a), abs(b))
    return float(a * t), float(b * t)


def planar_generator(W: SubgroupW) -> tuple[float, float]:
    if W.s != 2:
        raise UnsupportedDimension(f"Plotting needs s = 2, got s = {W.s}")
    if W.b != 1:
        raise UnsupportedDimension(f"Plotting needs b = 1, got b = {W.b}")
    e1, e2 = labeled(W.generators[0].sigma[:2].real, W.labeling, 2)
    return float(e1), float(e2)


def draw_domain(
    W: SubgroupW,
    window: int,
    extent: Optional[float] = None,
    theme: Theme = DEFAULT_THEME,
) -> draw.Drawing:
    """Rays eta^k (1, +-1) for |k| <= window, the strip B, and the regions D1, D2.

    D1 is {1 <= x <= eta_1, 0 < |y| <= x} and D2 is |Sigma| ∩ {x >= 1}, clipped at
    the right edge of the picture.
    """
    e1, e2 = planar_generator(W)
    X = extent if extent is not None else 1.5 * e1
    f = Frame(X)
    d = draw.Drawing(f.width, f.height)
    d.append(draw.Rectangle(0, 0, f.width, f.height, fill=theme.background))

    x0, y0 = f(1, X)
    x1, y1 = f(e1, -X)
    d.append(
        draw.Rectangle(
            x0, y0, round(x1 - x0, DIGITS), round(y1 - y0, DIGITS),
            fill=theme.strip,
            class_="strip",
        )
    )

    d.append(
        draw.Lines(
            *f.flat([(1, 1), (e1, e1), (e1, -e1), (1, -1)]),
            close=True,
            fill=theme.d1,
            fill_opacity=0.35,
            stroke="none",
            class_="D1",
        )
    )

    slope = e2 / e1
    d2 = draw.Path(fill=theme.d2, fill_opacity=0.35, stroke="none", class_="D2")
    for sign in (1, -1):
        corners = [(1, sign * slope), (1, sign), (X, sign * X), (X, sign * X * slope)]
        d2.M(*f(*corners[0]))
        for c in corners[1:]:
            d2.L(*f(*c))
        d2.Z()
    d.append(d2)

    ox, oy = f(0, 0)
    for k in range(-window, window + 1):
        for sign in (1, -1):
            direction = np.array([e1**k, sign * e2**k])
            d.append(
                draw.Line(
                    ox, oy, *f(*ray_exit(direction, X)),
                    stroke=theme.ray,
                    stroke_width=1,
                    class_="ray",
                )
            )

    d.append(draw.Line(*f(0, 0), *f(X, 0), stroke=theme.axis, class_="axis"))
    d.append(draw.Line(*f(0, -X), *f(0, X), stroke=theme.axis, class_="axis"))
    for label, (x, y) in (("B", ((1 + e1) / 2, -0.9 * X)), ("D1", ((1 + e1) / 2, 0))):
        d.append(
            draw.Text(
                label, 12, *f(x, y),
                fill=theme.text,
                text_anchor="middle",
                dominant_baseline="middle",
            )
        )

    logger.debug(f"Domain plot: eta=({e1:.6f}, {e2:.6f}), window={window}, extent={X}")
    return d


def render_svg(W: SubgroupW, window: int) -> str:
    return draw_domain(W, window).as_svg()
