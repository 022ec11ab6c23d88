import numpy as np
import pytest

from qenigma.channels import (
    ChannelParams, DetectionEvent, Outcome, SinglePhotonState, depolarize_density, depolarize_symbol,
    depolarize_symbols, detect, inject_noise_photons, lossy_transmit, mode_transform, unary_encode,
)
from qenigma.core import DensityMatrix, DomainError, RngStream, basis_state, haar_unitary, trace_distance


def three_sigma(p, n):
    return 3 * np.sqrt(p * (1 - p) / n)


class TestParams:
    @pytest.mark.parametrize("kw", [{"eta": 1.1}, {"tau": -0.1}, {"mean_noise_photons": -1.0},
                                    {"mean_noise_photons": float("nan")}])
    def test_domain(self, kw):
        with pytest.raises(DomainError):
            ChannelParams(**kw)


class TestDepolarizing:
    def test_density_formula(self):
        rho = basis_state(2, 0).density()
        out = depolarize_density(rho, 0.6)
        assert np.allclose(out.matrix, np.diag([0.8, 0.2]))

    def test_density_endpoints(self):
        rho = basis_state(3, 2).density()
        assert trace_distance(depolarize_density(rho, 1.0), rho) == 0
        assert trace_distance(depolarize_density(rho, 0.0), DensityMatrix.maximally_mixed(3)) < 1e-15

    def test_commutes_with_unitaries(self):
        # the map is unitarily covariant, so locking before or after noise is the same
        u = haar_unitary(4, RngStream(2)).matrix
        rho = basis_state(4, 1).density()
        a = depolarize_density(DensityMatrix(u @ rho.matrix @ u.conj().T), 0.3).matrix
        b = u @ depolarize_density(rho, 0.3).matrix @ u.conj().T
        assert np.allclose(a, b, atol=1e-14)

    @pytest.mark.parametrize("eta,d", [(0.0, 2), (0.5, 4), (0.6, 2), (1.0, 4)])
    def test_symbol_success_rate(self, eta, d):
        n = 100000
        out = depolarize_symbols(np.zeros(n, dtype=int), d, eta, RngStream(1))
        p = eta + (1 - eta) / d
        assert abs(np.mean(out == 0) - p) <= three_sigma(p, n)

    def test_errors_are_uniform(self):
        out = depolarize_symbols(np.zeros(60000, dtype=int), 4, 0.2, RngStream(3))
        wrong = out[out != 0]
        counts = np.bincount(wrong, minlength=4)[1:]
        assert counts.min() / counts.max() > 0.95

    def test_single_symbol(self):
        assert depolarize_symbol(1, 2, 1.0, RngStream(0)) == 1
        with pytest.raises(DomainError):
            depolarize_symbol(2, 2, 0.5, RngStream(0))


class TestUnary:
    def test_encode(self):
        s = unary_encode(5, 3)
        assert isinstance(s, SinglePhotonState) and s.n_modes == 5
        assert s.amplitudes[3] == 1

    def test_encode_range(self):
        with pytest.raises(DomainError):
            unary_encode(4, 4)

    def test_transform_round_trip(self):
        u = haar_unitary(6, RngStream(9))
        s = unary_encode(6, 2)
        t = mode_transform(u, s)
        back = u.matrix.conj().T @ t.amplitudes
        assert np.allclose(back, s.amplitudes, atol=1e-12)

    def test_transform_dimension(self):
        with pytest.raises(DomainError):
            mode_transform(haar_unitary(3, RngStream(0)), unary_encode(4, 0))


class TestDetection:
    def test_born_rule(self):
        amps = np.sqrt(np.array([0.5, 0.3, 0.2]))
        s = SinglePhotonState(amps)
        root = RngStream(4)
        n = 30000
        modes = np.array([detect(s, root.split(i)).mode for i in range(n)])
        for m, p in enumerate([0.5, 0.3, 0.2]):
            assert abs(np.mean(modes == m) - p) <= three_sigma(p, n)

    def test_event_validation(self):
        with pytest.raises(DomainError):
            DetectionEvent(Outcome.PHOTON_IN_MODE, 4, None)
        with pytest.raises(DomainError):
            DetectionEvent(Outcome.NO_PHOTON, 4, 1)

    def test_loss_rate(self):
        s = unary_encode(4, 0)
        root = RngStream(6)
        n = 20000
        survived = np.mean([lossy_transmit(s, 0.3, root.split(i)) is s for i in range(n)])
        assert abs(survived - 0.3) <= three_sigma(0.3, n)

    def test_loss_does_not_depend_on_mode_count(self):
        a = [lossy_transmit(unary_encode(2, 0), 0.5, RngStream(i)) for i in range(200)]
        b = [lossy_transmit(unary_encode(64, 0), 0.5, RngStream(i)) for i in range(200)]
        assert [isinstance(x, DetectionEvent) for x in a] == [isinstance(x, DetectionEvent) for x in b]

    def test_loss_endpoints(self):
        s = unary_encode(3, 1)
        assert lossy_transmit(s, 1.0, RngStream(0)) is s
        assert lossy_transmit(s, 0.0, RngStream(0)).outcome is Outcome.NO_PHOTON


class TestNoise:
    def test_zero_noise_is_identity(self):
        ev = DetectionEvent(Outcome.PHOTON_IN_MODE, 4, 2)
        assert inject_noise_photons(ev, 0.0, RngStream(0)) is ev

    def test_noise_on_signal_gives_multi(self):
        ev = DetectionEvent(Outcome.PHOTON_IN_MODE, 4, 2)
        root = RngStream(1)
        n = 20000
        multi = np.mean([inject_noise_photons(ev, 0.5, root.split(i)).outcome is Outcome.MULTI_PHOTON
                         for i in range(n)])
        p = 1 - np.exp(-0.5)
        assert abs(multi - p) <= three_sigma(p, n)

    def test_noise_in_empty_bin_fakes_a_photon(self):
        ev = DetectionEvent(Outcome.NO_PHOTON, 8)
        root = RngStream(2)
        outs = [inject_noise_photons(ev, 3.0, root.split(i)) for i in range(4000)]
        fakes = [o for o in outs if o.outcome is Outcome.PHOTON_IN_MODE]
        assert all(o.outcome in (Outcome.PHOTON_IN_MODE, Outcome.NO_PHOTON) for o in outs)
        assert len(fakes) > 0.9 * len(outs)
        assert len({o.mode for o in fakes}) == 8
