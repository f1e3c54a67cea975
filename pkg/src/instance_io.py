"""
Instance text format and labeling images.

    mrf <V> <E> <L>
    unary <i> <θ_i(0)> ... <θ_i(L-1)>            (V lines)
    edge <i> <j> table <L·L row-major values>     (E lines, or)
    edge <i> <j> fn <w> <linear|quadratic|huber> [<δ>]

'#' starts a comment. A leading "# grid WxH" comment marks a row-major
4-connected grid so labelings can be written as images. Huber values are
the doubled integers d² / 2δd − δ².
"""
import logging
import re
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from energy import EnergyModel, PairwiseSpec, Regularizer
from errors import InstanceSyntaxError, InvalidArgumentError

logger = logging.getLogger(__name__)

GRID_COMMENT = re.compile(r"#\s*grid\s+(\d+)\s*x\s*(\d+)", re.IGNORECASE)


def _number(token: str, line_number: int, scale: Optional[Fraction]) -> int:
    if scale is None:
        try:
            return int(token)
        except ValueError:
            raise InstanceSyntaxError(line_number, f"expected an integer, got {token!r}") from None
    try:
        value = Fraction(token) * scale
    except (ValueError, ZeroDivisionError):
        raise InstanceSyntaxError(line_number, f"expected a number, got {token!r}") from None
    if value.denominator != 1:
        raise InstanceSyntaxError(line_number, f"{token} × {scale} = {value} is not an integer")
    return int(value)


def _index(token: str, line_number: int, limit: int, what: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise InstanceSyntaxError(line_number, f"{what} index must be an integer, got {token!r}") from None
    if not 0 <= value < limit:
        raise InstanceSyntaxError(line_number, f"{what} index {value} outside 0..{limit - 1}")
    return value


def parse_instance(text: str, scale: Union[None, int, str, Fraction] = None) -> EnergyModel:
    """
    Parse instance text into an EnergyModel.

    Args:
        text: Instance text
        scale: Multiply every potential by this factor; values may then be
            decimals or fractions as long as the product is an integer

    Raises:
        InstanceSyntaxError: malformed input, with the 1-based line number
    """
    factor = None if scale is None else Fraction(scale)
    header: Optional[Tuple[int, int, int]] = None
    grid_shape: Optional[Tuple[int, int]] = None
    unary: List[Optional[List[int]]] = []
    edges: List[Tuple[int, int]] = []
    specs: List[PairwiseSpec] = []
    seen_edges = set()
    last_line = 0

    for line_number, raw in enumerate(text.splitlines(), start=1):
        last_line = line_number
        stripped = raw.strip()
        if stripped.startswith("#"):
            match = GRID_COMMENT.match(stripped)
            if match and header is None:
                grid_shape = (int(match.group(1)), int(match.group(2)))
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        keyword = tokens[0]

        if header is None:
            if keyword != "mrf" or len(tokens) != 4:
                raise InstanceSyntaxError(line_number, "expected header 'mrf <V> <E> <L>'")
            try:
                num_vertices, num_edges, num_labels = (int(t) for t in tokens[1:])
            except ValueError:
                raise InstanceSyntaxError(line_number, "header values must be integers") from None
            if num_labels < 2:
                raise InstanceSyntaxError(line_number, f"need at least 2 labels, got {num_labels}")
            if num_vertices < 0 or num_edges < 0:
                raise InstanceSyntaxError(line_number, "vertex and edge counts must be nonnegative")
            header = (num_vertices, num_edges, num_labels)
            unary = [None] * num_vertices
            continue

        num_vertices, num_edges, num_labels = header
        if keyword == "unary":
            if len(tokens) != 2 + num_labels:
                raise InstanceSyntaxError(line_number, f"unary needs an index and {num_labels} values")
            i = _index(tokens[1], line_number, num_vertices, "vertex")
            if unary[i] is not None:
                raise InstanceSyntaxError(line_number, f"duplicate unary for vertex {i}")
            unary[i] = [_number(t, line_number, factor) for t in tokens[2:]]
        elif keyword == "edge":
            if len(tokens) < 4:
                raise InstanceSyntaxError(line_number, "edge needs two endpoints and a kind")
            i = _index(tokens[1], line_number, num_vertices, "vertex")
            j = _index(tokens[2], line_number, num_vertices, "vertex")
            if i == j:
                raise InstanceSyntaxError(line_number, f"self-loop edge ({i},{j})")
            key = (min(i, j), max(i, j))
            if key in seen_edges:
                raise InstanceSyntaxError(line_number, f"duplicate edge ({i},{j})")
            if len(edges) == num_edges:
                raise InstanceSyntaxError(line_number, f"more than {num_edges} edges")
            seen_edges.add(key)
            specs.append(_parse_pairwise(tokens[3:], line_number, num_labels, factor))
            edges.append((i, j))
        else:
            raise InstanceSyntaxError(line_number, f"unknown keyword {keyword!r}")

    if header is None:
        raise InstanceSyntaxError(max(last_line, 1), "missing 'mrf' header")
    num_vertices, num_edges, num_labels = header
    missing = [i for i, row in enumerate(unary) if row is None]
    if missing:
        raise InstanceSyntaxError(last_line, f"missing unary for vertex {missing[0]}")
    if len(edges) != num_edges:
        raise InstanceSyntaxError(last_line, f"expected {num_edges} edges, found {len(edges)}")
    if grid_shape is not None and grid_shape[0] * grid_shape[1] != num_vertices:
        logger.warning("ignoring grid comment %dx%d for %d vertices", grid_shape[0], grid_shape[1], num_vertices)
        grid_shape = None

    unary_array = np.array(unary, dtype=np.int64).reshape(num_vertices, num_labels)
    return EnergyModel(num_vertices, num_labels, tuple(edges), unary_array, tuple(specs),
                       grid_shape=grid_shape)


def _parse_pairwise(tokens: Sequence[str], line_number: int, num_labels: int,
                    factor: Optional[Fraction]) -> PairwiseSpec:
    kind = tokens[0]
    if kind == "table":
        values = tokens[1:]
        if len(values) != num_labels * num_labels:
            raise InstanceSyntaxError(
                line_number, f"table needs {num_labels * num_labels} values, got {len(values)}")
        table = np.array([_number(t, line_number, factor) for t in values], dtype=np.int64)
        return PairwiseSpec.from_table(table.reshape(num_labels, num_labels))
    if kind == "fn":
        if len(tokens) not in (3, 4):
            raise InstanceSyntaxError(line_number, "fn needs '<w> <linear|quadratic|huber> [<δ>]'")
        weight = _number(tokens[1], line_number, factor)
        try:
            regularizer = Regularizer(tokens[2])
        except ValueError:
            raise InstanceSyntaxError(line_number, f"unknown regularizer {tokens[2]!r}") from None
        delta = 1
        if regularizer is Regularizer.HUBER:
            if len(tokens) != 4:
                raise InstanceSyntaxError(line_number, "huber needs a delta")
            try:
                delta = int(tokens[3])
            except ValueError:
                raise InstanceSyntaxError(line_number, f"huber delta must be an integer, got {tokens[3]!r}") from None
        elif len(tokens) == 4:
            raise InstanceSyntaxError(line_number, f"{regularizer.value} takes no delta")
        try:
            return PairwiseSpec.regularized(weight, regularizer, delta)
        except InvalidArgumentError as e:
            raise InstanceSyntaxError(line_number, str(e)) from None
    raise InstanceSyntaxError(line_number, f"unknown pairwise kind {kind!r}")


def serialize_instance(model: EnergyModel) -> str:
    """Instance text; parse_instance(serialize_instance(m)) reproduces m"""
    lines = []
    if model.grid_shape is not None:
        lines.append(f"# grid {model.grid_shape[0]}x{model.grid_shape[1]}")
    lines.append(f"mrf {model.num_vertices} {model.num_edges} {model.num_labels}")
    for i, row in enumerate(model.unary):
        lines.append("unary " + " ".join(str(int(v)) for v in [i, *row]))
    for (i, j), spec in zip(model.edges, model.pairwise):
        if spec.is_symbolic:
            tail = f"fn {spec.weight} {spec.kind.value}"
            if spec.kind is Regularizer.HUBER:
                tail += f" {spec.delta}"
        else:
            tail = "table " + " ".join(str(int(v)) for v in spec.table.ravel())
        lines.append(f"edge {i} {j} {tail}")
    return "\n".join(lines) + "\n"


def read_instance(path: Union[str, Path], scale=None) -> EnergyModel:
    with open(path, "r", encoding="utf-8") as f:
        return parse_instance(f.read(), scale)


def write_instance(path: Union[str, Path], model: EnergyModel):
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_instance(model))


def labeling_pixels(labels: Sequence[int], num_labels: int) -> np.ndarray:
    """round(255·x/(ℓ−1)) with halves rounded up, as uint8"""
    x = np.asarray(labels, dtype=np.int64)
    top = num_labels - 1
    return ((510 * x + top) // (2 * top)).astype(np.uint8)


def write_pgm(path: Union[str, Path], labels: Sequence[int], width: int, height: int, num_labels: int):
    """
    Save a row-major grid labeling as a binary (P5) PGM with maxval 255.

    Raises:
        InvalidArgumentError: the labeling does not have width·height entries
    """
    if len(labels) != width * height:
        raise InvalidArgumentError(f"{len(labels)} labels do not fill a {width}x{height} grid")
    pixels = labeling_pixels(labels, num_labels).reshape(height, width)
    Image.fromarray(pixels).save(path, format="PPM")
    logger.debug("wrote %dx%d labeling to %s", width, height, path)
