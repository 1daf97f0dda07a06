"""SVG-диаграмма деклинации: точки округов, центры масс F и H, точка G и линия 1/2."""

import logging

from markupsafe import Markup

from app.metrics import Election, Point, declination, declination_geometry, format_metric

logger = logging.getLogger(__name__)

PLOT_WIDTH = 800
PLOT_HEIGHT = 500
MARGIN = 40

WIN_COLOR = "#1f4e9c"
LOSS_COLOR = "#b22222"
GEOMETRY_COLOR = "#222222"
REFERENCE_COLOR = "#999999"


def _x(value: float) -> str:
    return "%.2f" % (MARGIN + value * PLOT_WIDTH)


def _y(value: float) -> str:
    return "%.2f" % (MARGIN + (1.0 - value) * PLOT_HEIGHT)


def _line(start: Point, end: Point, element_id: str, color: str, dashed: bool = False) -> Markup:
    dash = Markup(' stroke-dasharray="6 4"') if dashed else Markup("")
    return Markup(
        '<line id="{id}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="{color}" stroke-width="2"{dash}/>'
    ).format(id=element_id, x1=_x(start[0]), y1=_y(start[1]), x2=_x(end[0]), y2=_y(end[1]), color=color, dash=dash)


def _marker(point: Point, name: str) -> Markup:
    return Markup(
        '<circle id="{name}" cx="{cx}" cy="{cy}" r="6" fill="none" stroke="{color}" stroke-width="2"/>'
        '<text x="{tx}" y="{ty}" font-size="16" fill="{color}">{name}</text>'
    ).format(
        name=name,
        cx=_x(point[0]),
        cy=_y(point[1]),
        tx="%.2f" % (MARGIN + point[0] * PLOT_WIDTH + 8),
        ty="%.2f" % (MARGIN + (1.0 - point[1]) * PLOT_HEIGHT - 8),
        color=GEOMETRY_COLOR,
    )


def declination_diagram(e: Election, title: str | None = None) -> str:
    """
    Построение SVG-документа с геометрией деклинации.

    Координаты x ∈ [0, 1] и y ∈ [0, 1] отображаются на область 800×500 пикселей
    с полями 40 пикселей; все числа печатаются с двумя знаками, поэтому
    одинаковые выборы дают побайтово одинаковый документ.

    Args:
        e: Выборы с определённой деклинацией
        title: Подпись диаграммы (экранируется)

    Returns:
        str: SVG-документ

    Raises:
        UndefinedDeclinationError: Если одна партия выиграла все округа
    """
    geometry = declination_geometry(e)
    value = declination(e)

    width = PLOT_WIDTH + 2 * MARGIN
    height = PLOT_HEIGHT + 2 * MARGIN

    parts: list[Markup] = [
        Markup(
            '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">'
            '<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>'
        ).format(w=width, h=height),
        _line(geometry.t, geometry.u, "half", REFERENCE_COLOR),
    ]

    for x, share in geometry.points:
        parts.append(
            Markup('<circle class="district" cx="{cx}" cy="{cy}" r="4" fill="{fill}"/>').format(
                cx=_x(x), cy=_y(share), fill=WIN_COLOR if share > 0.5 else LOSS_COLOR
            )
        )

    parts.extend(
        [
            _line(geometry.f, geometry.h, "FH", REFERENCE_COLOR, dashed=True),
            _line(geometry.f, geometry.g, "FG", GEOMETRY_COLOR),
            _line(geometry.g, geometry.h, "GH", GEOMETRY_COLOR),
            _marker(geometry.f, "F"),
            _marker(geometry.g, "G"),
            _marker(geometry.h, "H"),
            Markup('<text id="delta" x="{x}" y="{y}" font-size="18">δ = {value}</text>').format(
                x=MARGIN + 10, y=height - MARGIN - 10, value=format_metric(value, 2)
            ),
        ]
    )

    if title:
        parts.append(
            Markup('<text id="title" x="{x}" y="{y}" font-size="20" text-anchor="middle">{title}</text>').format(
                x=width // 2, y=MARGIN - 12, title=title
            )
        )

    parts.append(Markup("</svg>\n"))

    logger.debug("Построена диаграмма для N=%s", e.n_districts)
    return str(Markup("").join(parts))
