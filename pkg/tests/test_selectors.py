"""Selector matching against a hand-written truth oracle.

The oracle below restates the matching rules independently of the
implementation: an absent device set matches everything; with no
extension every listed arch must equal the target; match_any is
membership; match_none is its complement.
"""

from __future__ import annotations

import itertools

import pytest

from forge.selectors import (
    TARGETS,
    AmbiguousVariant,
    ContextSelector,
    Extension,
    resolve_variant,
    selector_matches,
    selector_score,
)

ARCH_UNIVERSE = ("amdgcn", "nvptx", "nvptx64", "vgpu", "host")


def oracle_matches(archs: tuple[str, ...] | None, mode: str, target: str) -> bool:
    if archs is None:
        return True
    if mode == "match_any":
        return target in archs
    if mode == "match_none":
        return target not in archs
    return all(a == target for a in archs)


def all_selectors():
    """Every subset of the arch universe under every extension mode.

    The empty subset stands for an absent device set and only exists in
    the extension-free mode, matching the selector invariant.
    """
    cases = []
    for k in range(len(ARCH_UNIVERSE) + 1):
        for subset in itertools.combinations(ARCH_UNIVERSE, k):
            if not subset:
                cases.append((None, "none"))
                continue
            for mode in ("none", "match_any", "match_none"):
                cases.append((subset, mode))
    return cases


def make_selector(archs, mode) -> ContextSelector:
    return ContextSelector(device_arch=archs, extension=Extension(mode))


def test_worked_examples():
    amdgcn = TARGETS["amdgcn"]
    nvptx = TARGETS["nvptx"]
    nvptx64 = TARGETS["nvptx64"]
    assert selector_matches(make_selector(("amdgcn",), "none"), amdgcn) is True
    assert selector_matches(make_selector(("nvptx", "nvptx64"), "none"), nvptx64) is False
    assert selector_matches(make_selector(("nvptx", "nvptx64"), "match_any"), nvptx64) is True
    assert selector_matches(make_selector(("amdgcn",), "match_none"), nvptx) is True


def test_exhaustive_truth_table():
    selectors = all_selectors()
    checked = 0
    for archs, mode in selectors:
        sel = make_selector(archs, mode)
        for target in ARCH_UNIVERSE:
            got = selector_matches(sel, TARGETS[target])
            want = oracle_matches(archs, mode, target)
            assert got == want, (archs, mode, target)
            checked += 1
    assert checked <= 480
    assert checked == len(selectors) * len(ARCH_UNIVERSE)


def test_score_examples():
    assert selector_score(make_selector(("amdgcn",), "none"), TARGETS["amdgcn"]) == 1
    assert selector_score(ContextSelector(), TARGETS["vgpu"]) == 0
    assert selector_score(make_selector(("nvptx",), "none"), TARGETS["amdgcn"]) is None


def test_score_tracks_matching_everywhere():
    for archs, mode in all_selectors():
        sel = make_selector(archs, mode)
        for target in ARCH_UNIVERSE:
            score = selector_score(sel, TARGETS[target])
            if not oracle_matches(archs, mode, target):
                assert score is None
            elif archs is None:
                assert score == 0
            else:
                assert score == 1


def test_single_element_list_is_equality():
    for arch in ARCH_UNIVERSE:
        sel = make_selector((arch,), "none")
        for target in ARCH_UNIVERSE:
            assert selector_matches(sel, TARGETS[target]) == (arch == target)


def test_match_none_is_negated_match_any():
    for k in range(1, len(ARCH_UNIVERSE) + 1):
        for subset in itertools.combinations(ARCH_UNIVERSE, k):
            any_sel = make_selector(subset, "match_any")
            none_sel = make_selector(subset, "match_none")
            for target in ARCH_UNIVERSE:
                t = TARGETS[target]
                assert selector_matches(none_sel, t) == (not selector_matches(any_sel, t))


class _FakeDecl:
    def __init__(self, tag: str, selector: ContextSelector) -> None:
        self.tag = tag
        self.variant_of = ("base", selector)
        self.loc = None


def test_resolve_prefers_device_match_over_vacuous():
    specific = _FakeDecl("specific", make_selector(("vgpu",), "none"))
    vacuous = _FakeDecl("vacuous", ContextSelector())
    chosen = resolve_variant("base", [vacuous, specific], TARGETS["vgpu"])
    assert chosen is specific


def test_resolve_returns_none_without_match():
    cand = _FakeDecl("nv", make_selector(("nvptx",), "none"))
    assert resolve_variant("base", [cand], TARGETS["amdgcn"]) is None


def test_resolve_tie_is_an_error():
    a = _FakeDecl("a", make_selector(("vgpu",), "none"))
    b = _FakeDecl("b", make_selector(("vgpu", "amdgcn"), "match_any"))
    with pytest.raises(AmbiguousVariant):
        resolve_variant("base", [a, b], TARGETS["vgpu"])


def test_resolve_never_picks_a_loser():
    candidates = [
        _FakeDecl("any", make_selector(("amdgcn", "nvptx"), "match_any")),
        _FakeDecl("vac", ContextSelector()),
    ]
    for target in ARCH_UNIVERSE:
        t = TARGETS[target]
        chosen = resolve_variant("base", candidates, t)
        score = selector_score(chosen.variant_of[1], t)
        assert score is not None
        for other in candidates:
            s = selector_score(other.variant_of[1], t)
            if s is not None:
                assert score >= s
