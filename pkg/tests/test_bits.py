from hypothesis import given
from hypothesis import strategies as st

from joinsim.bits import bit_list, iter_submasks, mask_of, subsets_by_size

bit_sets = st.sets(st.integers(min_value=0, max_value=40), max_size=10)


@given(bit_sets)
def test_mask_roundtrip(bits):
    assert bit_list(mask_of(bits)) == sorted(bits)


@given(bit_sets.filter(bool))
def test_submask_count(bits):
    mask = mask_of(bits)
    subs = list(iter_submasks(mask))
    # proper non-empty submasks: 2^k - 2 of them
    assert len(subs) == 2 ** len(bits) - 2
    assert all(0 < s < mask and s | mask == mask for s in subs)
    assert subs == sorted(subs, reverse=True)


def test_subsets_by_size_order():
    subs = subsets_by_size(0b1011)
    assert subs == [0b0001, 0b0010, 0b1000, 0b0011, 0b1001, 0b1010, 0b1011]


@given(bit_sets.filter(bool))
def test_subsets_by_size_complete(bits):
    full = mask_of(bits)
    subs = subsets_by_size(full)
    assert len(subs) == 2 ** len(bits) - 1
    assert len(set(subs)) == len(subs)
    sizes = [s.bit_count() for s in subs]
    assert sizes == sorted(sizes)
