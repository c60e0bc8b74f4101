import xml.etree.ElementTree as ET

from sceneorder.render import render_svg

SVG = "{http://www.w3.org/2000/svg}"


def _polygons(svg):
    return ET.fromstring(svg).iter(f"{SVG}polygon")


def test_empty_scene_floor_only(make):
    svg = render_svg(make([]))
    polys = list(_polygons(svg))
    assert len(polys) == 1 and polys[0].get("data-index") is None


def test_one_polygon_per_object(grammar_scenes):
    s = grammar_scenes[0]
    polys = [p for p in _polygons(render_svg(s)) if p.get("data-index") is not None]
    assert [int(p.get("data-index")) for p in polys] == list(range(len(s.objects)))
    assert [p.get("data-class") for p in polys] == list(s.class_names)


def test_valid_and_deterministic(grammar_scenes):
    scenes = (grammar_scenes * 2)[:100]
    for s in scenes:
        svg = render_svg(s)
        assert svg == render_svg(s)
        ET.fromstring(svg)


def test_same_class_same_color(make):
    s = make([(0, (0, 0.5, 0), (1, 1, 1), 0.0), (0, (2, 0.5, 2), (1, 1, 1), 0.3),
              (1, (-2, 0.5, 0), (1, 1, 1), 0.0)])
    polys = [p for p in _polygons(render_svg(s)) if p.get("data-index") is not None]
    fills = [p.get("fill") for p in polys]
    assert fills[0] == fills[1] != fills[2]
