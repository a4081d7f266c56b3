import pytest

from nkcert.common import UnsupportedDimension
from nkcert.plot import (
    CANVAS,
    DEFAULT_THEME,
    MARGIN,
    Frame,
    Theme,
    draw_domain,
    planar_generator,
    ray_exit,
    render_svg,
)
from nkcert.unit_lattice import SubgroupW
from tests.field_setup import (
    QUINTIC,
    SALEM4,
    SALEM4_ROOT,
    load_field,
    quintic_units,
    salem4_units,
    subgroup,
)


@pytest.fixture(scope="module")
def salem4():
    F, E = load_field(SALEM4)
    units = salem4_units(F, E)
    return units, subgroup(units, [(1, 0)])


def test_frame():
    f = Frame(4.0)
    assert f(0, 4) == (MARGIN, MARGIN)
    assert f(0, 0) == (MARGIN, CANVAS / 2)
    assert f.height == CANVAS
    assert f.width == pytest.approx(CANVAS / 2 + MARGIN)
    assert f.flat([(0, 4), (0, 0)]) == [MARGIN, MARGIN, MARGIN, CANVAS / 2]

    assert ray_exit((1.0, 2.0), 4.0) == (2.0, 4.0)
    assert ray_exit((3.0, -1.0), 6.0) == (6.0, -2.0)


def test_planar_generator(salem4):
    units, W = salem4
    assert planar_generator(W) == pytest.approx((SALEM4_ROOT, 1 / SALEM4_ROOT))

    # test rank two
    with pytest.raises(UnsupportedDimension, match="b = 1"):
        planar_generator(SubgroupW([units[0], units[1] ** 2], 2, 1))

    # test three real places
    F, E = load_field(QUINTIC)
    with pytest.raises(UnsupportedDimension, match="s = 2"):
        planar_generator(SubgroupW(quintic_units(F, E)[:1], 3, 1))


def test_draw_domain(salem4):
    _, W = salem4
    svg = render_svg(W, 8)
    assert svg.startswith("<?xml")
    assert svg.count('class="ray"') == 2 * (2 * 8 + 1)
    assert svg.count('class="axis"') == 2
    assert 'class="strip"' in svg
    assert 'class="D1"' in svg
    assert 'class="D2"' in svg
    assert DEFAULT_THEME.d1 in svg

    # test custom theme and extent
    theme = Theme(d1="#123456")
    svg = draw_domain(W, 2, extent=5.0, theme=theme).as_svg()
    assert "#123456" in svg
    assert svg.count('class="ray"') == 10
