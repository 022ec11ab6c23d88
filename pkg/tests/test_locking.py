import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qenigma.core import CapacityError, DensityMatrix, DomainError, PureState, RngStream, trace_distance
from qenigma.locking import (
    Key, LockingEnsemble, Message, eve_average_state, generate_haar_ensemble, load_ensemble, lock,
    message_states, mub_qubit_ensemble, save_ensemble, unlock,
)


class TestEnsemble:
    def test_shapes(self, haar_factory):
        e = haar_factory(2, 3)
        assert (e.dim, e.n_messages, e.n_keys, len(e)) == (4, 4, 8, 8)
        assert e.locked_columns.shape == (4, 32)

    def test_locked_column_layout(self, haar_factory):
        e = haar_factory(2, 1)
        for k in range(2):
            for j in range(4):
                assert np.array_equal(e.locked_columns[:, k * 4 + j], e.matrices[k][:, j])

    def test_same_rng_same_ensemble(self):
        a = generate_haar_ensemble(2, 2, RngStream(7))
        b = generate_haar_ensemble(2, 2, RngStream(7))
        assert np.array_equal(a.matrices, b.matrices)

    def test_growing_m_keeps_earlier_unitaries(self):
        a = generate_haar_ensemble(2, 1, RngStream(7))
        b = generate_haar_ensemble(2, 3, RngStream(7))
        assert np.array_equal(a.matrices, b.matrices[:2])

    def test_non_unitary_rejected(self):
        with pytest.raises(DomainError):
            LockingEnsemble(2, 1, 0, np.array([[[1.0, 1.0], [0.0, 1.0]]]))

    def test_wrong_count_rejected(self):
        with pytest.raises(DomainError):
            LockingEnsemble(2, 1, 1, np.eye(2)[None])

    def test_key_capacity(self):
        with pytest.raises(CapacityError):
            generate_haar_ensemble(1, 20, RngStream(0))

    def test_unary_dimension_may_exceed_messages(self):
        e = generate_haar_ensemble(2, 1, RngStream(0), dim=6)
        assert (e.dim, e.n_messages) == (6, 4)

    def test_matrices_read_only(self, haar_factory):
        with pytest.raises(ValueError):
            haar_factory(1, 1).matrices[0, 0, 0] = 0


class TestLockUnlock:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 3), st.integers(0, 3), st.integers(0, 1000), st.data())
    def test_round_trip(self, n, m, seed, data):
        e = generate_haar_ensemble(n, m, RngStream(seed))
        j = data.draw(st.integers(0, 2 ** n - 1))
        k = data.draw(st.integers(0, 2 ** m - 1))
        msg, conf = unlock(e, lock(e, j, k), k)
        assert msg == Message(n, j)
        assert conf >= 1 - 1e-9

    def test_typed_arguments(self, haar_factory):
        e = haar_factory(2, 2)
        s = lock(e, Message(2, 3), Key(2, 1))
        assert unlock(e, s, Key(2, 1))[0].value == 3

    def test_bit_width_mismatch(self, haar_factory):
        e = haar_factory(2, 2)
        with pytest.raises(DomainError):
            lock(e, Message(3, 1), 0)
        with pytest.raises(DomainError):
            lock(e, 0, Key(1, 0))

    def test_out_of_range(self, haar_factory):
        e = haar_factory(1, 1)
        with pytest.raises(DomainError):
            lock(e, 2, 0)
        with pytest.raises(DomainError):
            lock(e, 0, 2)
        with pytest.raises(DomainError):
            Message(2, 4)
        with pytest.raises(DomainError):
            Key(1, -1)

    def test_tie_goes_to_lowest_index(self):
        e = LockingEnsemble(2, 1, 0, np.eye(2)[None])
        plus = PureState(np.array([1.0, 1.0]) / np.sqrt(2))
        msg, conf = unlock(e, plus, 0)
        assert msg.value == 0 and conf == pytest.approx(0.5)

    def test_wrong_key_usually_fails(self, haar_factory):
        e = haar_factory(3, 2, seed=4)
        confs = [unlock(e, lock(e, j, 0), 1)[1] for j in range(8)]
        assert max(confs) < 1 - 1e-3

    def test_decoded_index_beyond_messages(self):
        e = LockingEnsemble(3, 1, 0, np.eye(3)[None])
        with pytest.raises(DomainError):
            unlock(e, PureState(np.array([0, 0, 1.0])), 0)

    def test_message_states(self, haar_factory):
        e = haar_factory(1, 1)
        states = message_states(e, [0, 1], [1, 0])
        assert np.array_equal(states[1].amplitudes, e.matrices[0][:, 1])


class TestEveAverage:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_no_key_is_maximally_mixed(self, n, haar_factory):
        rho = eve_average_state(haar_factory(n, 0, seed=n))
        assert trace_distance(rho, DensityMatrix.maximally_mixed(2 ** n)) < 1e-10

    def test_mub(self):
        rho = eve_average_state(mub_qubit_ensemble(1))
        assert trace_distance(rho, DensityMatrix.maximally_mixed(2)) < 1e-12

    def test_brute_force_sum(self, haar_factory):
        e = haar_factory(1, 2, dim=3)
        rho = sum(np.outer(lock(e, j, k).amplitudes, lock(e, j, k).amplitudes.conj())
                  for j in range(2) for k in range(4)) / 8
        assert np.allclose(eve_average_state(e).matrix, rho, atol=1e-14)


class TestMub:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_unbiased(self, n):
        e = mub_qubit_ensemble(n)
        overlaps = np.abs(e.matrices[0].conj().T @ e.matrices[1]) ** 2
        assert np.allclose(overlaps, 1 / 2 ** n, atol=1e-14)


class TestPersistence:
    def test_round_trip_exact(self, tmp_path, haar_factory):
        e = haar_factory(2, 2, dim=5)
        path = tmp_path / "e.qlk"
        save_ensemble(e, path)
        f = load_ensemble(path)
        assert (f.dim, f.n_bits, f.m_bits) == (5, 2, 2)
        assert np.array_equal(f.matrices, e.matrices)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.qlk"
        path.write_bytes(b"NOPE" + bytes(24))
        with pytest.raises(DomainError):
            load_ensemble(path)

    def test_truncated(self, tmp_path, haar_factory):
        path = tmp_path / "t.qlk"
        save_ensemble(haar_factory(1, 1), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DomainError):
            load_ensemble(path)
