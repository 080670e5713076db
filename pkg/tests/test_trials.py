import io
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sasvkit.trials import (
    DuplicateKeyError,
    ExtraScoresWarning,
    LabelKind,
    MissingScoresError,
    ScoreSet,
    Trial,
    TrialFormatError,
    TrialLabel,
    format_score_file,
    format_trial_list,
    join,
    parse_score_file,
    parse_trial_list,
)


def test_parse_single_target():
    assert parse_trial_list("s1 u1 target") == [Trial("s1", "u1", TrialLabel(LabelKind.TARGET))]


def test_parse_typed_spoof():
    [trial] = parse_trial_list("s1 u1 spoof:A07")
    assert trial.label == TrialLabel(LabelKind.SPOOF, "A07")


def test_parse_untyped_spoof_and_blank_lines():
    trials = parse_trial_list("\n s1 u1 spoof \n\ns2 u2 nontarget\n")
    assert [t.label.token() for t in trials] == ["spoof", "nontarget"]


def test_duplicate_trial_is_an_error():
    with pytest.raises(DuplicateKeyError) as err:
        parse_trial_list("s1 u1 target\ns1 u1 nontarget")
    assert err.value.line_no == 2


@pytest.mark.parametrize("text, line", [
    ("s1 u1", 1),
    ("s1 u1 target extra", 1),
    ("s1 u1 target\ns2 u2 bonafide", 2),
    ("s1 u1 spoof:", 1),
])
def test_malformed_trial_lines(text, line):
    with pytest.raises(TrialFormatError) as err:
        parse_trial_list(text)
    assert err.value.line_no == line
    assert f"line {line}" in str(err.value)


def test_label_invariant():
    with pytest.raises(ValueError):
        TrialLabel(LabelKind.TARGET, "A01")


def test_parse_trials_from_stream():
    assert len(parse_trial_list(io.StringIO("a b target\nc d nontarget\n"))) == 2


def test_parse_score_file():
    s = parse_score_file("s1 u1 0.93", "sys")
    assert s.entries == {("s1", "u1"): 0.93}
    assert s.system_name == "sys"


def test_score_parse_error_reports_line():
    with pytest.raises(TrialFormatError) as err:
        parse_score_file("s1 u1 abc", "sys")
    assert err.value.line_no == 1


def test_score_formats():
    s = parse_score_file("s1 u1 1e-3\ns2 u2 -4.5", "sys")
    assert s.entries == {("s1", "u1"): 0.001, ("s2", "u2"): -4.5}


@pytest.mark.parametrize("text", ["a b nan", "a b inf", "a b 1\na b 2"])
def test_score_file_rejects_nonfinite_and_duplicates(text):
    with pytest.raises(TrialFormatError):
        parse_score_file(text, "sys")


def test_scoreset_rejects_nonfinite():
    with pytest.raises(ValueError):
        ScoreSet("x", {("a", "b"): math.inf})


def test_join_single():
    trials = parse_trial_list("s1 u1 target")
    data = join(trials, [parse_score_file("s1 u1 0.5", "a")])
    assert len(data.columns) == 1
    assert data.scores("a").tolist() == [0.5]


def test_join_missing_score():
    trials = parse_trial_list("s1 u1 target\ns2 u2 nontarget")
    with pytest.raises(MissingScoresError) as err:
        join(trials, [parse_score_file("s1 u1 0.5", "a")])
    assert err.value.missing == {"a": [("s2", "u2")]}


def test_join_missing_lists_at_most_ten_keys():
    trials = parse_trial_list("".join(f"s u{i} target\n" for i in range(25)))
    with pytest.raises(MissingScoresError) as err:
        join(trials, [ScoreSet("a", {})])
    msg = str(err.value)
    assert "25 missing" in msg and "(+15 more)" in msg
    assert msg.count("s u") == 10


def test_join_extra_scores_warn():
    trials = parse_trial_list("s1 u1 target")
    with pytest.warns(ExtraScoresWarning):
        data = join(trials, [parse_score_file("s1 u1 0.5\ns9 u9 1.0", "a")])
    assert data.column("a").entries == {("s1", "u1"): 0.5}


tokens = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789_-.", min_size=1, max_size=6)
labels = st.one_of(
    st.just(TrialLabel(LabelKind.TARGET)),
    st.just(TrialLabel(LabelKind.NONTARGET)),
    st.just(TrialLabel(LabelKind.SPOOF)),
    tokens.map(lambda t: TrialLabel(LabelKind.SPOOF, t)),
)


@given(st.dictionaries(st.tuples(tokens, tokens), labels, max_size=30))
def test_trial_list_round_trip(mapping):
    trials = [Trial(e, t, lab) for (e, t), lab in mapping.items()]
    assert parse_trial_list(format_trial_list(trials)) == trials


@given(st.dictionaries(st.tuples(tokens, tokens),
                       st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=30))
def test_score_file_round_trip_is_exact(mapping):
    s = ScoreSet("x", mapping)
    back = parse_score_file(format_score_file(s), "x")
    assert back.entries == s.entries


@given(st.data())
def test_join_projection(data):
    keys = data.draw(st.lists(st.tuples(tokens, tokens), unique=True, min_size=1, max_size=20))
    trials = [Trial(e, t, TrialLabel(LabelKind.TARGET)) for e, t in keys]
    sets = []
    for name in ("a", "b"):
        vals = data.draw(st.lists(st.floats(-1e6, 1e6), min_size=len(keys), max_size=len(keys)))
        sets.append(ScoreSet(name, dict(zip(keys, vals))))
    joined = join(trials, sets)
    for k, s in enumerate(sets):
        assert joined.scores(s.system_name).tolist() == [s.entries[key] for key in keys]
        assert joined.columns[k].entries == s.entries
