"""Shared fixtures, random generators, and independent oracles.

The evaluator and path enumerator in this file are deliberately written from
scratch (product-filter paths, fixpoint containment closure) so the package's
own semantics module can be tested against something that shares none of its
code.
"""
import itertools
import json
import random
from fractions import Fraction
from pathlib import Path as FsPath

import pytest

from threatfix import dsl, parse_model
from threatfix.model import SystemModel

DATA = FsPath(__file__).parent / "data"


def data_text(name: str) -> str:
    return (DATA / name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def smarthome():
    return parse_model(data_text("smarthome.json"))


@pytest.fixture(scope="session")
def iot_rules():
    return dsl.parse_rules(data_text("iot.tl"))


@pytest.fixture(scope="session")
def motivating():
    from threatfix import load_costs
    m = parse_model(data_text("motivating.json"))
    return load_costs(m, data_text("enc.csv"))


@pytest.fixture(scope="session")
def two_rules():
    return dsl.parse_rules(data_text("two.tl"))


# -- independent semantics oracle ---------------------------------------------

def naive_paths(m: SystemModel) -> list[tuple[str, ...]]:
    """All simple paths, by filtering every connector sequence up to n-1."""
    out = []
    n = len(m.elements)
    for k in range(1, n):
        for seq in itertools.product(m.connectors, repeat=k):
            visited = [m.source[seq[0]]]
            ok = True
            for idx, c in enumerate(seq):
                if idx > 0 and m.source[c] != m.target[seq[idx - 1]]:
                    ok = False
                    break
                visited.append(m.target[c])
            if not ok or len(set(visited)) != len(visited):
                continue
            out.append(tuple(seq))
    return out


def naive_closure(m: SystemModel) -> set:
    pairs = set(m.containment)
    while True:
        extra = {(a, d) for (a, b) in pairs for (c, d) in pairs if b == c}
        if extra <= pairs:
            return pairs
        pairs |= extra


def naive_eval(m: SystemModel, phi, env=None, paths=None, closure=None,
               valuation=None) -> bool:
    env = {} if env is None else env
    paths = naive_paths(m) if paths is None else paths
    closure = naive_closure(m) if closure is None else closure
    valuation = m.valuation if valuation is None else valuation

    def path_members(p):
        members = set(p)
        members.add(m.source[p[0]])
        members.update(m.target[c] for c in p)
        return members

    def go(phi, env):
        if isinstance(phi, dsl.TypeIs):
            return m.type_of[env[phi.var]] == phi.type_name
        if isinstance(phi, dsl.ValIs):
            return valuation.get((env[phi.var], phi.attr)) == phi.value
        if isinstance(phi, dsl.SrcIs):
            return m.source[env[phi.conn]] == env[phi.elem]
        if isinstance(phi, dsl.TgtIs):
            return m.target[env[phi.conn]] == env[phi.elem]
        if isinstance(phi, dsl.Connects):
            c = env[phi.conn]
            return env[phi.elem] in (m.source[c], m.target[c])
        if isinstance(phi, dsl.Crosses):
            c, b = env[phi.conn], env[phi.boundary]
            return ((b, m.source[c]) in closure) != ((b, m.target[c]) in closure)
        if isinstance(phi, dsl.Contained):
            return (env[phi.boundary], env[phi.inner]) in closure
        if isinstance(phi, dsl.Holds):
            return (env[phi.holder], env[phi.asset]) in m.asset_rel
        if isinstance(phi, dsl.PathSrcIs):
            return m.source[env[phi.path][0]] == env[phi.elem]
        if isinstance(phi, dsl.PathTgtIs):
            return m.target[env[phi.path][-1]] == env[phi.elem]
        if isinstance(phi, dsl.InPath):
            return env[phi.item] in path_members(env[phi.path])
        if isinstance(phi, dsl.Not):
            return not go(phi.body, env)
        if isinstance(phi, dsl.Or):
            return go(phi.left, env) or go(phi.right, env)
        if isinstance(phi, dsl.ExistsItem):
            for item in m.items_of_sort(phi.sort):
                if go(phi.body, {**env, phi.var: item}):
                    return True
            return False
        if isinstance(phi, dsl.ExistsPath):
            for p in paths:
                if go(phi.body, {**env, phi.var: p}):
                    return True
            return False
        raise AssertionError(phi)

    return go(phi, env)


def naive_min_repair(m: SystemModel, formulas):
    """Exhaustive minimum over all valuations; None when unrepairable."""
    paths = naive_paths(m)
    closure = naive_closure(m)
    cells = sorted(m.valuation)
    domains = [m.meta.attribute(attr).domain for _, attr in cells]
    best = None
    for combo in itertools.product(*domains):
        valuation = dict(zip(cells, combo))
        cost = Fraction(0)
        for (item, attr), value in valuation.items():
            cost += m.cost(item, attr, m.valuation[(item, attr)], value)
        if best is not None and cost >= best:
            continue
        if any(naive_eval(m, phi, paths=paths, closure=closure,
                          valuation=valuation) for phi in formulas):
            continue
        best = cost
    return best


# -- random instance generators ----------------------------------------------

ELEMENT_TYPES = ["Host", "Router", "Sensor"]
CONNECTOR_TYPES = ["Wire", "Radio"]
ASSET_TYPES = ["Key"]
BOUNDARY_TYPES = ["Zone"]
ATTR_NAMES = ["p", "q", "r"]
VALUE_POOL = ["v0", "v1", "v2"]


def random_model(rng: random.Random, max_elements=5, max_connectors=8,
                 max_assets=2, max_boundaries=2, max_attrs=3,
                 max_domain=3) -> SystemModel:
    n_elem = rng.randint(1, max_elements)
    elements = [f"e{i}" for i in range(n_elem)]
    attributes = []
    for name in ATTR_NAMES[:rng.randint(0, max_attrs)]:
        domain = rng.sample(VALUE_POOL, rng.randint(1, max_domain))
        applies = [t for t in ELEMENT_TYPES + CONNECTOR_TYPES + ASSET_TYPES
                   if rng.random() < 0.5]
        if not applies:
            applies = [rng.choice(ELEMENT_TYPES)]
        attributes.append({"name": name, "domain": domain, "appliesTo": applies})
    doc = {
        "meta": {
            "elementTypes": ELEMENT_TYPES,
            "connectorTypes": CONNECTOR_TYPES,
            "assetTypes": ASSET_TYPES,
            "boundaryTypes": BOUNDARY_TYPES,
            "attributes": attributes,
        },
        "elements": [],
        "connectors": [],
        "assets": [],
        "boundaries": [],
    }

    def attrs_for(type_name):
        out = {}
        for a in attributes:
            if type_name in a["appliesTo"] and rng.random() < 0.7:
                out[a["name"]] = rng.choice(a["domain"])
        return out   # absent applicable attributes take defaults at parse

    for e in elements:
        t = rng.choice(ELEMENT_TYPES)
        doc["elements"].append({"id": e, "type": t, "attrs": attrs_for(t)})
    if n_elem >= 2:
        for i in range(rng.randint(0, max_connectors)):
            t = rng.choice(CONNECTOR_TYPES)
            src, tgt = rng.sample(elements, 2)
            doc["connectors"].append({"id": f"c{i}", "type": t, "source": src,
                                      "target": tgt, "attrs": attrs_for(t)})
    for i in range(rng.randint(0, max_assets)):
        holders = [x["id"] for x in doc["elements"] + doc["connectors"]
                   if rng.random() < 0.4]
        doc["assets"].append({"id": f"a{i}", "type": rng.choice(ASSET_TYPES),
                              "heldBy": holders})
    boundary_ids = [f"b{i}" for i in range(rng.randint(0, max_boundaries))]
    # containment is a forest: every item gets at most one direct parent
    unclaimed = set(elements)
    for i, b in enumerate(boundary_ids):
        inside = [e for e in sorted(unclaimed) if rng.random() < 0.4]
        unclaimed -= set(inside)
        if i + 1 < len(boundary_ids) and rng.random() < 0.3:
            inside.append(boundary_ids[i + 1])
        doc["boundaries"].append({"id": b, "type": rng.choice(BOUNDARY_TYPES),
                                  "contains": inside})
    return parse_model(json.dumps(doc))


def random_costs(rng: random.Random, m: SystemModel) -> str:
    """A small CSV cost table over cells that exist in the model."""
    rows = ["item,attribute,from,to,cost"]
    cells = sorted(m.valuation)
    for item, attr in cells:
        domain = m.meta.attribute(attr).domain
        for a, b in itertools.permutations(domain, 2):
            if rng.random() < 0.4:
                cost = rng.choice(["1", "2", "5", "1/2", "3/2", "0", "7"])
                rows.append(f"{item},{attr},{a},{b},{cost}")
    return "\n".join(rows) + "\n"


_FRESH = itertools.count()


def random_formula(rng: random.Random, m: SystemModel, depth: int,
                   env=None, path_budget=1) -> dsl.Formula:
    """Random closed, well-sorted formula of quantifier depth <= depth."""
    env = {} if env is None else env

    def fresh(sort):
        return f"x{next(_FRESH)}", sort

    def atom_choices():
        by_sort = {}
        for var, sort in env.items():
            by_sort.setdefault(sort, []).append(var)
        out = []
        items = lambda s: by_sort.get(s, [])
        for x in items("element") + items("connector") + items("asset") + items("boundary"):
            out.append(("type", x))
        for x in items("element") + items("connector") + items("asset"):
            out.append(("val", x))
        for c in items("connector"):
            for e in items("element"):
                out.append(("src", c, e))
                out.append(("tgt", c, e))
                out.append(("connects", e, c))
            for b in items("boundary"):
                out.append(("crosses", c, b))
        for b in items("boundary"):
            for x in items("element") + items("boundary"):
                if x != b:
                    out.append(("contained", x, b))
        for a in items("asset"):
            for x in items("element") + items("connector"):
                out.append(("holds", x, a))
        for p in items("path"):
            for e in items("element"):
                out.append(("psrc", p, e))
                out.append(("ptgt", p, e))
            for x in items("element") + items("connector"):
                out.append(("inpath", x, p))
        return out

    def make_atom():
        choices = atom_choices()
        kind = rng.choice(choices)
        if kind[0] == "type":
            pool = {"element": ELEMENT_TYPES, "connector": CONNECTOR_TYPES,
                    "asset": ASSET_TYPES, "boundary": BOUNDARY_TYPES}[env[kind[1]]]
            name = rng.choice(pool + ["Ghost"])
            return dsl.TypeIs(kind[1], name)
        if kind[0] == "val":
            attr = rng.choice(ATTR_NAMES + ["bogus"])
            value = rng.choice(VALUE_POOL + ["zz"])
            return dsl.ValIs(kind[1], attr, value)
        if kind[0] == "src":
            return dsl.SrcIs(kind[1], kind[2])
        if kind[0] == "tgt":
            return dsl.TgtIs(kind[1], kind[2])
        if kind[0] == "connects":
            return dsl.Connects(kind[1], kind[2])
        if kind[0] == "crosses":
            return dsl.Crosses(kind[1], kind[2])
        if kind[0] == "contained":
            return dsl.Contained(kind[1], kind[2])
        if kind[0] == "holds":
            return dsl.Holds(kind[1], kind[2])
        if kind[0] == "psrc":
            return dsl.PathSrcIs(kind[1], kind[2])
        if kind[0] == "ptgt":
            return dsl.PathTgtIs(kind[1], kind[2])
        if kind[0] == "inpath":
            return dsl.InPath(kind[1], kind[2])
        raise AssertionError(kind)

    def quantifier():
        nonlocal path_budget
        if path_budget > 0 and rng.random() < 0.35:
            path_budget -= 1
            var, sort = fresh("path")
            body = random_formula(rng, m, depth - 1, {**env, var: sort},
                                  path_budget)
            return dsl.ExistsPath(var, body)
        sort = rng.choice(["element", "element", "connector", "asset", "boundary"])
        var, _ = fresh(sort)
        body = random_formula(rng, m, depth - 1, {**env, var: sort}, path_budget)
        return dsl.ExistsItem(var, sort, body)

    if depth <= 0:
        if not atom_choices():
            return dsl.TypeIs("no_such", "T")   # unreachable; env always usable at depth 0
        return make_atom()
    if not atom_choices():
        return quantifier()
    roll = rng.random()
    if roll < 0.35:
        return quantifier()
    if roll < 0.5:
        return dsl.Not(random_formula(rng, m, depth - 1, env, path_budget))
    if roll < 0.65:
        return dsl.Or(random_formula(rng, m, depth - 1, env, path_budget),
                      random_formula(rng, m, depth - 1, env, path_budget))
    return make_atom()


def random_closed_formula(rng: random.Random, m: SystemModel, depth=4):
    phi = random_formula(rng, m, depth)
    assert not dsl.free_vars(phi)
    return phi


def probe_paths(m: SystemModel):
    """Decode every satisfying path assignment of one slot group.

    Grounds `exists path p . exists element e . src(p) = e` (true exactly when
    the model has a path at all) and enumerates models, blocking each decoded
    path on the projected slot and length variables so filler assignments
    collapse to one representative.
    """
    from threatfix.encoder import Grounder
    from threatfix.sat import solve_clauses

    phi = dsl.parse_formula('exists path p . exists element e . src(p) = e')
    g = Grounder(m)
    clauses = list(g.base_clauses) + g.pin_clauses() + g.ground(phi)
    if not g.vt.groups:
        return []                    # n <= 1: the translation is `false`
    group = g.vt.groups[0]
    found = []
    while True:
        verdict, model = solve_clauses(clauses, g.vt.next_var - 1)
        if verdict == "unsat":
            return found
        assert verdict == "sat"
        path = g.decode_path(group, model)
        found.append(path)
        assert len(found) <= 5000, "path enumeration did not terminate"
        k = len(path.connectors)
        block = [group.lens[k]] + [group.slots[(i + 1, c)]
                                   for i, c in enumerate(path.connectors)]
        clauses = clauses + [[-lit for lit in block]]
