from typing import Any

import jinja2

from blendconv.files import read_asset_text


def process_template(template: str, values: dict[str, Any]) -> str:
    """
    Render a Jinja2 template string with strict undefined.

    Args:
        template (str): Template string.
        values (dict[str, Any]): Variables to render into the template.

    Returns:
        str: Rendered string.
    """
    env = jinja2.Environment(
        undefined=jinja2.StrictUndefined, keep_trailing_newline=True
    )
    env.filters["sci"] = lambda v: f"{v:.3e}"
    rendered: str = env.from_string(template).render(**values)
    return rendered


def render_report(name: str, values: dict[str, Any]) -> str:
    """Render one of the packaged report templates, e.g. `basis_report.txt.j2`."""
    return process_template(read_asset_text(f"templates/{name}"), values)
