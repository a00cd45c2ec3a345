import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsprivacy.extreal import INF, NEG_INF, UNBOUNDED
from nsprivacy.infotheory import conditional_entropy, disarray_d0, leakage_L0, maximin_Istar
from nsprivacy.kanon import (PASSTHROUGH, SUPPRESS, Bins, GeneralizationScheme, Mechanism,
                             MechanismError, Table, TableError, analyze_release, anonymize,
                             read_table, release_family, verify_k)


def test_bin_labels():
    t = Table([1, 2, 3, 9], [(0, 10)])
    rel = anonymize(t, GeneralizationScheme([Bins([0, 5, 10])]))
    assert [r[0] for r in rel.rows] == ["[0,5)", "[0,5)", "[0,5)", "[5,10)"]
    assert verify_k(rel, 1) == (True, 1)
    assert verify_k(rel, 2) == (False, 1)
    # the domain's upper end falls in the last bin
    assert anonymize(Table([10], [(0, 10)]), GeneralizationScheme([Bins([0, 5, 10])])).rows == (("[5,10)",),)


def test_all_suppressed():
    t = Table([[1, 2], [3, 4], [5, 6]], [(0, 10), (0, 10)])
    s = GeneralizationScheme([SUPPRESS, SUPPRESS])
    rel = anonymize(t, s)
    assert verify_k(rel, 3) == (True, 3)
    rep = analyze_release(t, s)
    assert rep.cond_measure == pytest.approx(10.0 ** 6)
    assert rep.l0 == 0.0 and rep.i_star_count == 1


def test_verify_k_counts():
    rows = [("a",)] * 3 + [("b",)] * 3
    assert verify_k(rows, 3) == (True, 3)
    assert verify_k([("a",), ("b",), ("c",)], 2) == (False, 1)
    with pytest.raises(TableError):
        verify_k([], 1)


def test_single_entry_bins():
    t = Table([7], [(0, 10)])
    rep = analyze_release(t, GeneralizationScheme([Bins([0, 5, 10])]))
    assert rep.cond_measure == 5
    assert rep.l0 == pytest.approx(math.log(2))
    assert rep.i_star_count == 2


def passthrough_table():
    data = [[30, 5]] * 3 + [[41, 7], [44, 8], [47, 9]]
    return Table(data, [(0, 100), (0, 10)], ["age", "income"])


def test_leading_passthrough_is_k_anonymous_yet_leaks_everything():
    t = passthrough_table()
    scheme = GeneralizationScheme([Bins([0, 40, 100]), Bins([0, 5, 10])])
    mech = Mechanism.leading_passthrough(scheme, len(t), 3)
    ok, k = verify_k(anonymize(t, mech), 3)
    assert ok and k == 3
    rep = analyze_release(t, mech, k=3)
    assert rep.is_k_anon()
    assert rep.cond_measure == 0
    assert rep.d0 == NEG_INF and rep.l0 == INF
    assert rep.i_star is UNBOUNDED
    assert rep.to_dict()["l0"] == "+inf"


def test_release_family_agrees_with_separable_analysis():
    t = Table([[1, 8], [4, 2]], [(0, 6), (0, 10)])
    mech = Mechanism([[Bins([0, 2, 6]), SUPPRESS], [Bins([0, 3, 6]), Bins([0, 4, 10])]])
    rep = analyze_release(t, mech)
    fam = release_family(t, mech)
    dom = t.as_domain()
    # a sum of logs against the log of a product
    assert rep.h0_cond == pytest.approx(conditional_entropy(fam).value, abs=1e-12)
    assert rep.d0 == pytest.approx(disarray_d0(fam).value, abs=1e-12)
    assert rep.l0 == pytest.approx(leakage_L0(dom, fam).value, abs=1e-12)
    assert maximin_Istar(fam).count == rep.i_star_count == 8


def test_release_family_rejects_passthrough():
    t = Table([1], [(0, 2)])
    with pytest.raises(MechanismError):
        release_family(t, GeneralizationScheme([PASSTHROUGH]))


@given(st.lists(st.floats(0.5, 9.5), min_size=1, max_size=4, unique=True), st.data())
def test_coarsening_is_monotone(inner, data):
    fine = sorted(set([0.0, 10.0] + inner))
    drop = data.draw(st.sets(st.sampled_from(fine[1:-1])) if len(fine) > 2 else st.just(set()))
    coarse = [b for b in fine if b not in drop]
    v = data.draw(st.floats(0, 10))
    t = Table([[v]], [(0, 10)])
    f = analyze_release(t, GeneralizationScheme([Bins(fine)]))
    c = analyze_release(t, GeneralizationScheme([Bins(coarse)]))
    assert c.cond_measure >= f.cond_measure - 1e-12
    assert c.l0 <= f.l0 + 1e-12


def test_table_validation():
    with pytest.raises(TableError):
        Table([11], [(0, 10)])
    with pytest.raises(TableError):
        Table([[1, 2]], [(0, 10)])
    with pytest.raises(MechanismError):
        Bins([0, 0, 1])
    with pytest.raises(MechanismError):
        analyze_release(Table([1, 2], [(0, 10)]), Mechanism([[SUPPRESS]]))
    with pytest.raises(MechanismError):
        GeneralizationScheme(["bins"])


def test_read_table_errors():
    t = read_table(io.StringIO("a,b\n1,2\n3,4\n"), [(0, 5), (0, 5)])
    assert t.columns == ("a", "b") and np.array_equal(t.data, [[1, 2], [3, 4]])
    for text in ["", "a,b\n", "a,b\n1\n", "a,b\n1,x\n"]:
        with pytest.raises(TableError):
            read_table(io.StringIO(text), [(0, 5), (0, 5)])
    with pytest.raises(TableError):
        read_table(io.StringIO("a\n9\n"), [(0, 5)])


def test_release_csv():
    rel = anonymize(passthrough_table(), GeneralizationScheme([SUPPRESS, PASSTHROUGH]))
    assert rel.to_csv().splitlines()[:2] == ["age,income", "*,5"]
