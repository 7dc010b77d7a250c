import itertools

import pytest

from operadic.core import (
    EdgeKey,
    Interaction,
    NetOperation,
    NetType,
    OperadError,
    PermutationError,
    Signature,
    SignatureMismatchError,
    TypeMismatchError,
    canonical_form,
    compose,
    identity,
    overlay,
    parallel,
    permute,
    slot_permute,
)
from operadic.monoid import MonoidKind

CARRY = Signature([Interaction("carrying", directed=True, monoid=MonoidKind.BOOLEAN_OR)])
COMM = Signature([Interaction("comm", directed=False, monoid=MonoidKind.NAT_SUM)])
TOGGLE = Signature([Interaction("link", directed=False, monoid=MonoidKind.MOD2)])
LOOPY = Signature([Interaction("self", directed=False, monoid=MonoidKind.BOOLEAN_OR, loops=True)])


def edge_op(typ, sig, name, i, j, value=1):
    return NetOperation.endo(typ, {sig.edge(name, i, j): value}, sig)


def test_identity_has_no_edges_and_identity_placement():
    t = NetType.of("cut", "helo")
    e = identity(t)
    assert e.edges == ()
    assert e.placement == ((0, 0), (0, 1))
    assert e.inputs == (t,)
    assert e.output == t


def test_identity_empty_word():
    e = identity(NetType())
    assert e.node_count == 0 and e.arity == 1


def test_compose_with_identities_is_unit():
    t = NetType.of("cut", "helo", "qd")
    f = edge_op(t, CARRY, "carrying", 1, 0)
    assert compose(f, [identity(t)]) == f
    # identity on the outside too: identity(t) has one slot of type t
    assert compose(identity(t, CARRY), [f]) == f
    # empty-signature identity merges with anything
    assert compose(identity(t), [f]) == f


def test_parallel_unit_is_empty_identity():
    t = NetType.of("qd")
    f = edge_op(NetType.of("cut", "qd"), CARRY, "carrying", 1, 0)
    unit = identity(NetType())
    left = parallel(unit, f)
    right = parallel(f, unit)
    # boundaries and edges coincide with f; slot bookkeeping differs only by
    # the extra empty slot
    assert left.output == f.output == right.output
    assert left.edges == f.edges == right.edges
    assert [t for t in right.inputs if len(t)] == list(f.inputs)


def test_parallel_shifts_g_indices():
    a = edge_op(NetType.of("cut", "qd"), CARRY, "carrying", 1, 0)
    b = edge_op(NetType.of("boat", "uav"), CARRY, "carrying", 1, 0)
    both = parallel(a, b)
    keys = [k.endpoints for k, _ in both.edges]
    assert keys == [(1, 0), (3, 2)]
    assert both.output.names() == ("cut", "qd", "boat", "uav")
    assert both.placement == ((0, 0), (0, 1), (1, 0), (1, 1))


def test_overlay_merges_with_monoid():
    t = NetType.of("a", "b")
    one = edge_op(t, COMM, "comm", 0, 1, 2)
    two = edge_op(t, COMM, "comm", 0, 1, 3)
    assert overlay(one, two).edge_map()[COMM.edge("comm", 0, 1)] == 5


def test_overlay_mod2_cancels():
    t = NetType.of("a", "b")
    e = edge_op(t, TOGGLE, "link", 0, 1)
    assert overlay(e, e).edges == ()


def test_overlay_requires_same_boundary():
    a = edge_op(NetType.of("a", "b"), COMM, "comm", 0, 1)
    b = edge_op(NetType.of("a", "c"), COMM, "comm", 0, 1)
    with pytest.raises(TypeMismatchError):
        overlay(a, b)


def test_overlay_boolean_or_idempotent():
    t = NetType.of("cut", "qd")
    e = edge_op(t, CARRY, "carrying", 1, 0)
    assert overlay(e, e) == e


def test_permute_identity_is_noop():
    t = NetType.of("a", "b", "c")
    f = edge_op(t, COMM, "comm", 0, 2)
    assert permute(f, [0, 1, 2]) == f


def test_permute_relabels_edges_and_word():
    t = NetType.of("cut", "helo")
    f = edge_op(t, CARRY, "carrying", 1, 0)
    g = permute(f, [1, 0])
    assert g.output.names() == ("helo", "cut")
    assert [k.endpoints for k, _ in g.edges] == [(0, 1)]


def test_permute_undirected_recanonicalizes():
    t = NetType.of("a", "b")
    f = edge_op(t, COMM, "comm", 0, 1)
    g = permute(f, [1, 0])
    assert [k.endpoints for k, _ in g.edges] == [(0, 1)]


def test_permute_rejects_non_permutation():
    f = identity(NetType.of("a", "b"))
    with pytest.raises(PermutationError):
        permute(f, [0, 0])


def test_compose_type_error_names_slot_and_words():
    f = identity(NetType.of("cut", "helo"), CARRY)
    g = identity(NetType.of("cut", "qd"), CARRY)
    with pytest.raises(TypeMismatchError) as err:
        compose(f, [g])
    msg = str(err.value)
    assert "slot 0" in msg and "[cut, helo]" in msg and "[cut, qd]" in msg


def test_compose_pushes_edges_through_slots():
    # f : [cut, qd] x [helo] -> word (cut, qd, helo) with edge qd->cut
    t_out = NetType.of("cut", "qd", "helo")
    f = NetOperation.create(
        [NetType.of("cut", "qd"), NetType.of("helo")],
        t_out,
        [(0, 0), (0, 1), (1, 0)],
        {CARRY.edge("carrying", 1, 0): 1},
        CARRY,
    )
    g0 = edge_op(NetType.of("cut", "qd"), CARRY, "carrying", 1, 0)
    g1 = identity(NetType.of("helo"), CARRY)
    result = compose(f, [g0, g1])
    # g0's edge lands on the same nodes as f's own edge; BOOLEAN_OR merges them
    assert result.edge_map() == {CARRY.edge("carrying", 1, 0): 1}
    assert result.inputs == g0.inputs + g1.inputs


def test_signature_mismatch_rejected():
    other = Signature([Interaction("carrying", directed=True, monoid=MonoidKind.NAT_SUM)])
    t = NetType.of("cut", "qd")
    a = edge_op(t, CARRY, "carrying", 1, 0)
    b = edge_op(t, other, "carrying", 1, 0)
    with pytest.raises(SignatureMismatchError):
        parallel(a, b)


def test_loop_policy_enforced():
    t = NetType.of("a")
    with pytest.raises(OperadError):
        NetOperation.endo(t, {EdgeKey("carrying", (0,)): 1}, CARRY)
    looped = NetOperation.endo(t, {LOOPY.edge("self", 0, 0): 1}, LOOPY)
    assert looped.edges[0][0].is_loop


def test_edge_out_of_range_rejected():
    t = NetType.of("a", "b")
    with pytest.raises(OperadError):
        NetOperation.endo(t, {EdgeKey("comm", (0, 5)): 1}, COMM)


def test_placement_must_be_bijective_and_typed():
    t = NetType.of("a", "b")
    with pytest.raises(OperadError):
        NetOperation.create([t], t, [(0, 0), (0, 0)])
    with pytest.raises(TypeMismatchError):
        NetOperation.create([t], NetType.of("b", "a"), [(0, 0), (0, 1)])


def test_canonical_form_sorts_and_prunes():
    t = NetType.of("a", "b", "c")
    edges = [
        (COMM.edge("comm", 1, 2), 4),
        (COMM.edge("comm", 0, 1), 0),  # unit label, pruned
        (COMM.edge("comm", 0, 2), 1),
    ]
    f = NetOperation.endo(t, edges, COMM)
    assert [k.endpoints for k, _ in f.edges] == [(0, 2), (1, 2)]
    assert canonical_form(f) == f


def test_composition_orders_canonicalize_identically():
    # oracle: build a 3-edge operation as overlays in every order; all six
    # orders must produce byte-identical canonical forms
    t = NetType.of("cut", "helo", "qd", "qd")
    parts = [
        edge_op(t, CARRY, "carrying", 1, 0),
        edge_op(t, CARRY, "carrying", 2, 0),
        edge_op(t, CARRY, "carrying", 3, 1),
    ]
    blobs = set()
    for order in itertools.permutations(range(3)):
        acc = identity(t, CARRY)
        for i in order:
            acc = overlay(acc, parts[i])
        blobs.add(acc.canonical_bytes())
    assert len(blobs) == 1


def test_slot_permute_roundtrip():
    f = NetOperation.create(
        [NetType.of("cut"), NetType.of("helo", "qd")],
        NetType.of("cut", "helo", "qd"),
        [(0, 0), (1, 0), (1, 1)],
        {CARRY.edge("carrying", 2, 1): 1},
        CARRY,
    )
    g = slot_permute(f, [1, 0])
    assert g.inputs == (NetType.of("helo", "qd"), NetType.of("cut"))
    assert g.output == f.output and g.edges == f.edges
    assert slot_permute(g, [1, 0]) == f


def test_canonical_bytes_stable():
    t = NetType.of("cut", "qd")
    f = edge_op(t, CARRY, "carrying", 1, 0)
    g = edge_op(t, CARRY, "carrying", 1, 0)
    assert f.canonical_bytes() == g.canonical_bytes()
    assert b"carrying" in f.canonical_bytes()
