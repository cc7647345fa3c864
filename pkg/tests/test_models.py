import numpy as np
import pytest
from scipy import integrate

from stattrunc import (
    ChainFileError,
    Gm1Params,
    LyapunovCertificate,
    TruncationProblem,
    gm1_beta_coeffs,
    gm1_certificate,
    gm1_chain,
    load_chain_from_file,
    random_walk_certificate,
    random_walk_chain,
    validate_rows,
    verify_lyapunov_drift,
)

C = 2.01


def test_beta_coeffs_match_quadrature():
    """beta_i = integral_0^c exp(-t) t^i / (c i!) dt, checked for i = 0..25."""
    betas = gm1_beta_coeffs(Gm1Params(c=C, max_coeff=26))
    for i in range(26):
        ref, err = integrate.quad(
            lambda t, i=i: np.exp(-t + i * np.log(t) - sum(np.log(k) for k in range(1, i + 1))) / C,
            0.0, C)
        assert abs(betas[i] - ref) <= 1e-12 + 10 * err


def test_beta_coeffs_mass_and_mean():
    # total mass 1; mean number served = E[interarrival] = c/2
    betas = gm1_beta_coeffs(Gm1Params(c=C, max_coeff=256))
    assert betas.sum() == pytest.approx(1.0, abs=1e-13)
    assert (np.arange(256) * betas).sum() == pytest.approx(C / 2.0, abs=1e-12)
    assert np.all(betas >= 0.0)


def test_beta_coeffs_truncation_independent():
    short = gm1_beta_coeffs(Gm1Params(c=C, max_coeff=8))
    full = gm1_beta_coeffs(Gm1Params(c=C, max_coeff=64))
    assert np.array_equal(short, full[:8])


def test_gm1_row_structure():
    chain = gm1_chain()
    betas = gm1_beta_coeffs(Gm1Params(c=C, max_coeff=64))
    row0 = chain.row(0)
    assert row0.targets.tolist() == [0, 1]
    assert row0.probs[1] == pytest.approx(betas[0], abs=1e-15)
    row5 = chain.row(5)
    for y in range(1, 7):
        k = 6 - y
        got = row5.probs[row5.targets == y]
        assert got[0] == pytest.approx(betas[k], rel=1e-14)
    # P(x, 0) is the coefficient tail, never a 1-minus-partial-sum
    assert row5.probs[row5.targets == 0][0] == pytest.approx(betas[6:].sum(), rel=1e-12)


def test_gm1_rows_sum_to_one():
    chain = gm1_chain()
    report = validate_rows(chain, [0, 1, 2, 5, 50, 179, 300, 2000])
    assert report.passed
    assert report.max_abs_deviation <= 1e-13


def test_gm1_row_finite_support_far_out():
    # coefficients underflow around i ~ 180, so rows stay short forever
    row = gm1_chain().row(100_000)
    assert row.targets.size < 200
    assert row.targets.min() > 99_000


def test_random_walk_rows():
    chain = random_walk_chain()
    assert chain.row(0).entries == [(1, 1.0)]
    assert chain.row(7).entries == [(6, 2.0 / 3.0), (8, 1.0 / 3.0)]
    assert validate_rows(chain, range(50)).passed


def test_gm1_drift_audit_passes_with_large_K():
    prob = TruncationProblem(chain=gm1_chain(), A=np.arange(401), z=0,
                             K=np.arange(201), r=lambda x: float(x))
    report = verify_lyapunov_drift(prob, gm1_certificate())
    assert report.passed
    assert len(report.checked_states) == 201  # {201..401}
    assert report.excluded_states == list(range(201))


def test_gm1_drift_audit_fails_with_small_K():
    """300 x^2 cannot absorb the identity reward until x is a few hundred."""
    prob = TruncationProblem(chain=gm1_chain(), A=np.arange(401), z=0,
                             K=np.arange(61), r=lambda x: float(x))
    report = verify_lyapunov_drift(prob, gm1_certificate())
    assert not report.passed
    assert report.violations[0].state == 67
    assert all(v.kind == "g1" for v in report.violations)


def test_random_walk_drift_audit():
    prob = TruncationProblem(chain=random_walk_chain(), A=np.arange(350), z=0,
                             K=np.arange(301), r=lambda x: x / 2.0)
    assert verify_lyapunov_drift(prob, random_walk_certificate()).passed


def test_drift_audit_detects_undersized_certificate():
    bad = LyapunovCertificate(g1=lambda x: 0.1 * x * x, g2=lambda x: float(x) ** 2)
    prob = TruncationProblem(chain=random_walk_chain(), A=np.arange(350), z=0,
                             K=np.arange(301), r=lambda x: x / 2.0)
    report = verify_lyapunov_drift(prob, bad)
    assert not report.passed
    # taboo sum shields the state next to K but nothing beyond it
    assert report.violations[0].state == 302


def test_paper_literal_overrides_pin_boundary_state():
    cert = random_walk_certificate(paper_literal_a=500)
    assert cert.h1_override(500) == pytest.approx(501.0 ** 2 / 3.0)
    assert cert.h1_override(499) == 0.0
    beta0 = gm1_beta_coeffs(Gm1Params(c=C, max_coeff=1))[0]
    gcert = gm1_certificate(paper_literal_a=1000)
    assert gcert.h1_override(1000) == pytest.approx(300.0 * beta0 * 1001.0 ** 2)
    assert gcert.h2_override(1000) == pytest.approx(300.0 * beta0 * 1001.0)


def test_h_override_audit_matches_exact_exit_bound():
    # on A = {0..a} the pinned values equal the exact exit bounds: zero slack
    prob = TruncationProblem(chain=random_walk_chain(), A=np.arange(501), z=0,
                             K=np.arange(301), r=lambda x: x / 2.0)
    report = verify_lyapunov_drift(prob, random_walk_certificate(paper_literal_a=500))
    assert report.passed


def test_h_override_audit_flags_wrong_truncation_set():
    # same certificate on A = {0..499}: state 499 escapes but h(499) = 0
    prob = TruncationProblem(chain=random_walk_chain(), A=np.arange(500), z=0,
                             K=np.arange(301), r=lambda x: x / 2.0)
    report = verify_lyapunov_drift(prob, random_walk_certificate(paper_literal_a=500))
    assert not report.passed
    assert {v.state for v in report.violations} == {499}
    assert {v.kind for v in report.violations} == {"h1", "h2"}


def test_load_chain_round_trip(tmp_path):
    path = tmp_path / "chain.txt"
    path.write_text("# comment\nstates 3\n0 1 0.5\n0 2 0.5\n1 0 1.0\n2 0 1.0  # inline\n")
    chain = load_chain_from_file(path)
    assert chain.n_states == 3
    assert chain.row(0).entries == [(1, 0.5), (2, 0.5)]
    assert validate_rows(chain, range(3)).passed


@pytest.mark.parametrize("body,fragment", [
    ("0 1 1.0\n", "expected header"),
    ("states 0\n", "must be positive"),
    ("states 2\n0 1 1.0\n1 0\n", "expected 'src dst prob'"),
    ("states 2\n0 5 1.0\n1 0 1.0\n", "outside declared dimension"),
    ("states 2\n0 1 0.0\n1 0 1.0\n", "probability must be"),
    ("states 2\n0 1 0.5\n0 1 0.5\n1 0 1.0\n", "duplicate entry"),
    ("states 2\n0 1 0.9\n1 0 1.0\n", "sums to"),
    ("states 2\n0 1 1.0\n", "no outgoing transitions"),
    ("", "missing 'states N' header"),
])
def test_load_chain_rejects_malformed(tmp_path, body, fragment):
    path = tmp_path / "bad.txt"
    path.write_text(body)
    with pytest.raises(ChainFileError, match=fragment.replace("(", "\\(")):
        load_chain_from_file(path)
