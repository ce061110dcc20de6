"""JSON problem documents and deterministic result serialization.

One schema covers every variant::

    {
      "n_nodes": 4, "n_steps": 4, "variant": "tsp", "returning": true,
      "fixed_start": 0, "fixed_end": 3,
      "costs": {
        "step": [[..NxN..]] | "per_step": [[[..]]],   # one of the two
        "linear": [[..TxN..]],
        "memory": nested (T, N, ...) for nmtsp,
        "forbidden": {"edges": [[i,j]...] | [[t,i,j]...], "nodes": [[t,i]...]}
      },
      "bounds": [[lo,hi] x N], "groups": [[..]..], "precedence": [[a,b]..],
      "memory_depth": 2, "pinned": [[t,node]...], "exempt": [0]
    }

Bottleneck variants require integer step costs; violations are reported with
the offending field path.  Result serialization sorts keys and never emits
wall-clock data unless explicitly asked, so identical runs give identical
bytes.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import InputError
from .jrp import JrpInstance
from .problems import CostModel, TourProblem, Variant


class SchemaError(InputError):
    """Input document violates the schema; ``path`` points at the field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


def _expect(cond, path, message):
    if not cond:
        raise SchemaError(path, message)


def _number_array(value, path, shape_hint=None, integer=False):
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise SchemaError(path, "expected a (nested) array of numbers") from None
    if not np.all(np.isfinite(arr)):
        raise SchemaError(path, "numbers must be finite; use forbidden masks for infinities")
    if integer and np.any(arr != np.round(arr)):
        raise SchemaError(path, "bottleneck costs must be integers")
    if shape_hint is not None and arr.ndim != shape_hint:
        raise SchemaError(path, f"expected {shape_hint} dimensions, got {arr.ndim}")
    return arr


def problem_from_dict(doc) -> TourProblem:
    """Validate and build a TourProblem from a parsed JSON document."""
    _expect(isinstance(doc, dict), "$", "expected a JSON object")
    _expect("n_nodes" in doc, "n_nodes", "missing required field")
    _expect(isinstance(doc["n_nodes"], int) and doc["n_nodes"] > 0,
            "n_nodes", "expected a positive integer")
    n = doc["n_nodes"]
    variant_name = doc.get("variant", "tsp")
    try:
        variant = Variant(str(variant_name).lower())
    except ValueError:
        raise SchemaError("variant", f"unknown variant {variant_name!r}") from None
    if variant is Variant.PTSP:
        default_steps = len(doc.get("groups", []) or [])
    else:
        default_steps = n
    n_steps = doc.get("n_steps", default_steps)
    _expect(isinstance(n_steps, int) and n_steps > 0, "n_steps", "expected a positive integer")

    costs = doc.get("costs")
    _expect(isinstance(costs, dict), "costs", "expected an object")
    integer = variant in (Variant.BTSP_MINMAX, Variant.BTSP_MAXMIN)
    step = linear = memory = None
    if "step" in costs and "per_step" in costs:
        raise SchemaError("costs", "give either 'step' or 'per_step', not both")
    if "step" in costs:
        step = _number_array(costs["step"], "costs.step", 2, integer)
        _expect(step.shape == (n, n), "costs.step", f"expected shape ({n}, {n})")
    if "per_step" in costs:
        step = _number_array(costs["per_step"], "costs.per_step", 3, integer)
        _expect(step.shape == (n_steps, n, n), "costs.per_step",
                f"expected shape ({n_steps}, {n}, {n})")
    if "linear" in costs:
        linear = _number_array(costs["linear"], "costs.linear", 2)
        _expect(linear.shape == (n_steps, n), "costs.linear",
                f"expected shape ({n_steps}, {n})")
    if "memory" in costs:
        memory = _number_array(costs["memory"], "costs.memory")
    if variant is Variant.LINEAR_ONLY:
        _expect(linear is not None, "costs.linear", "linear_only requires linear costs")
    elif variant is Variant.NMTSP:
        _expect(memory is not None, "costs.memory", "nmtsp requires memory costs")
    else:
        _expect(step is not None, "costs", "step costs are required for this variant")

    forbidden_edges = forbidden_nodes = None
    forb = costs.get("forbidden")
    if forb is not None:
        _expect(isinstance(forb, dict), "costs.forbidden", "expected an object")
        edges = forb.get("edges", [])
        nodes = forb.get("nodes", [])
        if edges:
            width = {len(e) for e in edges}
            _expect(width <= {2} or width <= {3}, "costs.forbidden.edges",
                    "entries must be uniform [i, j] or [t, i, j]")
            if width == {2}:
                forbidden_edges = np.zeros((n, n), dtype=bool)
                for idx, (i, j) in enumerate(edges):
                    _expect(0 <= i < n and 0 <= j < n,
                            f"costs.forbidden.edges[{idx}]", "node id out of range")
                    forbidden_edges[i, j] = True
            else:
                forbidden_edges = np.zeros((n_steps, n, n), dtype=bool)
                for idx, (t, i, j) in enumerate(edges):
                    _expect(0 <= t < n_steps and 0 <= i < n and 0 <= j < n,
                            f"costs.forbidden.edges[{idx}]", "index out of range")
                    forbidden_edges[t, i, j] = True
        if nodes:
            forbidden_nodes = np.zeros((n_steps, n), dtype=bool)
            for idx, (t, i) in enumerate(nodes):
                _expect(0 <= t < n_steps and 0 <= i < n,
                        f"costs.forbidden.nodes[{idx}]", "index out of range")
                forbidden_nodes[t, i] = True

    kwargs = {}
    for key, caster in (("returning", bool), ("fixed_start", int), ("fixed_end", int),
                        ("memory_depth", int)):
        if doc.get(key) is not None:
            _expect(isinstance(doc[key], (int, bool)), key, "bad type")
            kwargs[key] = caster(doc[key])
    if doc.get("bounds") is not None:
        _expect(len(doc["bounds"]) == n, "bounds", f"expected {n} [lo, hi] pairs")
        kwargs["visit_bounds"] = tuple((int(a), int(b)) for a, b in doc["bounds"])
    if doc.get("groups") is not None:
        kwargs["groups"] = tuple(tuple(int(x) for x in g) for g in doc["groups"])
    if doc.get("precedence") is not None:
        kwargs["precedence"] = tuple((int(a), int(b)) for a, b in doc["precedence"])
    if doc.get("pinned") is not None:
        kwargs["pinned"] = tuple((int(t), int(a)) for t, a in doc["pinned"])
    if doc.get("exempt") is not None:
        kwargs["exempt_nodes"] = frozenset(int(x) for x in doc["exempt"])

    model = CostModel(step_costs=step, linear_costs=linear,
                      forbidden_edges=forbidden_edges, forbidden_nodes=forbidden_nodes,
                      memory_costs=memory)
    try:
        return TourProblem(n_nodes=n, n_steps=n_steps, variant=variant,
                           cost_model=model, **kwargs)
    except Exception as exc:
        raise SchemaError("$", str(exc)) from exc


def jrp_from_dict(doc) -> JrpInstance:
    """Schema: workers' and vacancies' qualities, affinities and factors."""
    _expect(isinstance(doc, dict), "$", "expected a JSON object")
    for key in ("quality_current", "quality_vacant", "affinity_current", "affinity_vacant"):
        _expect(key in doc, key, "missing required field")
    pc = _number_array(doc["quality_current"], "quality_current", 1)
    pv = _number_array(doc["quality_vacant"], "quality_vacant", 1)
    ac = _number_array(doc["affinity_current"], "affinity_current", 1)
    av = _number_array(doc["affinity_vacant"], "affinity_vacant")
    j = pc.shape[0]
    i = pv.shape[0]
    _expect(ac.shape == (j,), "affinity_current", f"expected {j} entries")
    if av.size == 0:
        av = av.reshape(0, j)
    _expect(av.shape == (i, j), "affinity_vacant", f"expected shape ({i}, {j})")
    factors = doc.get("factors", {})
    cp = float(factors.get("quality", 1.0))
    ca = float(factors.get("affinity", 1.0))
    return JrpInstance(
        n_workers=j, n_vacancies=i,
        current_quality=pc,
        vacancy_quality=np.concatenate(([0.0], pv)),
        current_affinity=ac,
        vacancy_affinity=np.vstack([np.zeros((1, j)), av]),
        quality_factor=cp, affinity_factor=ca)


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def solution_to_dict(solution, *, include_timings=False):
    """Deterministic result document (timings only on request)."""
    rep = solution.report
    out = {
        "route": list(solution.route),
        "cost": _jsonable(solution.cost),
        "feasible": bool(solution.feasible),
        "status": solution.status,
        "degenerate_choices": int(solution.degenerate_choices),
        "tau_used": _jsonable(solution.tau_used),
        "violations": list(solution.violations),
    }
    if solution.failed_iteration is not None:
        out["failed_iteration"] = int(solution.failed_iteration)
    if rep is not None:
        out["tie_counts"] = _jsonable(rep.tie_counts)
        out["tau_trace"] = _jsonable(rep.tau_trace)
        out["peak_w_elements"] = int(rep.peak_w_elements)
        out["mults"] = int(rep.total_mults)
        out["underflow_retries"] = int(rep.underflow_retries)
        out["anchors_tried"] = int(rep.anchors_tried)
        out["active_layers"] = _jsonable(rep.active_layer_sets)
        if rep.truncation_errors:
            out["truncation_errors"] = _jsonable(rep.truncation_errors)
        if include_timings:
            out["timings_s"] = [float(it.wall_s) for it in rep.iterations]
    return out


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"
