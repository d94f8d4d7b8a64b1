import numpy as np
import pytest

from app.errors import ContractViolation
from app.toric_code import (
    NoiseKind,
    NoiseModel,
    PauliType,
    ToricState,
    apply_chain,
    apply_noise,
    apply_pauli,
    h_index,
    has_logical_error,
    is_logical_error,
    measure_syndrome,
    new_state,
    v_index,
)


def _defects(state: ToricState) -> tuple[set, set]:
    syndrome = measure_syndrome(state)
    return set(syndrome.plaquette_defects()), set(syndrome.star_defects())


def test_new_state_is_clean():
    """The groundstate has no syndrome and no logical error."""
    state = new_state(5)
    assert state.n_qubits == 50
    assert measure_syndrome(state).is_empty
    assert not is_logical_error(state)


def test_new_state_rejects_small_distance():
    with pytest.raises(ContractViolation):
        new_state(1)


def test_state_is_immutable():
    state = new_state(3)
    with pytest.raises(ValueError):
        state.frame[0] = 1


def test_pauli_composition():
    """Products modulo phase follow the symplectic XOR."""
    assert PauliType.X.compose(PauliType.Z) == PauliType.Y
    assert PauliType.Y.compose(PauliType.X) == PauliType.Z
    assert PauliType.Z.compose(PauliType.Z) == PauliType.I
    assert PauliType.Y.has_x and PauliType.Y.has_z
    assert not PauliType.X.has_z


@pytest.mark.parametrize("r,c", [(0, 0), (1, 2), (4, 4)])
def test_single_x_error_flips_two_plaquettes(r, c):
    d = 5
    plaquettes, stars = _defects(apply_pauli(new_state(d), h_index(d, r, c), PauliType.X))
    assert plaquettes == {(r, c), ((r - 1) % d, c)}
    assert stars == set()

    plaquettes, stars = _defects(apply_pauli(new_state(d), v_index(d, r, c), PauliType.X))
    assert plaquettes == {(r, c), (r, (c - 1) % d)}
    assert stars == set()


@pytest.mark.parametrize("r,c", [(0, 0), (2, 1), (4, 4)])
def test_single_z_error_flips_two_stars(r, c):
    d = 5
    plaquettes, stars = _defects(apply_pauli(new_state(d), h_index(d, r, c), PauliType.Z))
    assert stars == {(r, c), (r, (c + 1) % d)}
    assert plaquettes == set()

    plaquettes, stars = _defects(apply_pauli(new_state(d), v_index(d, r, c), PauliType.Z))
    assert stars == {(r, c), ((r + 1) % d, c)}
    assert plaquettes == set()


def test_y_error_flips_plaquettes_and_stars():
    d = 3
    plaquettes, stars = _defects(apply_pauli(new_state(d), h_index(d, 0, 0), PauliType.Y))
    assert plaquettes == {(0, 0), (2, 0)}
    assert stars == {(0, 0), (0, 1)}


def test_apply_pauli_is_its_own_inverse(rng):
    """Applying the same Pauli twice restores the frame exactly."""
    state, _ = apply_noise(new_state(5), NoiseModel.depolarizing(0.3), rng)
    for qubit in range(state.n_qubits):
        for op in (PauliType.X, PauliType.Y, PauliType.Z):
            restored = apply_pauli(apply_pauli(state, qubit, op), qubit, op)
            assert np.array_equal(restored.frame, state.frame)


def test_apply_pauli_rejects_bad_moves():
    state = new_state(3)
    with pytest.raises(ContractViolation):
        apply_pauli(state, 18, PauliType.X)
    with pytest.raises(ContractViolation):
        apply_pauli(state, -1, PauliType.X)
    with pytest.raises(ContractViolation):
        apply_pauli(state, 0, PauliType.I)


def test_undoing_every_error_restores_the_codespace(rng):
    """Applying each corrupted qubit's own Pauli again clears the syndrome with no logical error."""
    for k in range(1000):
        d = (3, 5, 7)[k % 3]
        model = NoiseModel.depolarizing(0.2) if k % 2 else NoiseModel.bitflip(0.2)
        noisy, hits = apply_noise(new_state(d), model, rng)
        corrupted = [q for q in range(noisy.n_qubits) if noisy.pauli(q) != PauliType.I]
        assert len(corrupted) == hits
        state = noisy
        for qubit in corrupted:
            state = apply_pauli(state, qubit, noisy.pauli(qubit))
        assert measure_syndrome(state).is_empty
        assert not is_logical_error(state)
        assert not state.frame.any()


def test_syndrome_parity_is_even(rng):
    """Both defect counts stay even under any noise."""
    for k in range(10_000):
        d = (3, 5, 7)[k % 3]
        state, _ = apply_noise(new_state(d), NoiseModel.depolarizing(float(rng.random())), rng)
        syndrome = measure_syndrome(state)
        assert int(syndrome.plaquettes.sum()) % 2 == 0
        assert int(syndrome.stars.sum()) % 2 == 0


def test_stabilizers_are_invisible(rng):
    """Star X operators and plaquette Z operators leave syndrome and logical class unchanged."""
    d = 5
    for r in range(d):
        for c in range(d):
            star = [h_index(d, r, c), h_index(d, r, c - 1), v_index(d, r, c), v_index(d, r - 1, c)]
            plaquette = [h_index(d, r, c), h_index(d, r + 1, c), v_index(d, r, c), v_index(d, r, c + 1)]
            for qubits, op in ((star, PauliType.X), (plaquette, PauliType.Z)):
                state = apply_chain(new_state(d), qubits, op)
                assert measure_syndrome(state).is_empty
                assert not is_logical_error(state)


def test_stabilizer_on_top_of_noise_keeps_syndrome(rng):
    d = 4
    for _ in range(100):
        state, _ = apply_noise(new_state(d), NoiseModel.depolarizing(0.2), rng)
        r, c = (int(x) for x in rng.integers(d, size=2))
        star = [h_index(d, r, c), h_index(d, r, c - 1), v_index(d, r, c), v_index(d, r - 1, c)]
        moved = apply_chain(state, star, PauliType.X)
        assert np.array_equal(measure_syndrome(moved).plaquettes, measure_syndrome(state).plaquettes)
        assert np.array_equal(measure_syndrome(moved).stars, measure_syndrome(state).stars)


def test_non_contractible_x_loops_are_logical_errors():
    d = 3
    row_loop = apply_chain(new_state(d), [v_index(d, 1, c) for c in range(d)], PauliType.X)
    assert measure_syndrome(row_loop).is_empty
    assert has_logical_error(row_loop) == ((False, True), (False, False))

    column_loop = apply_chain(new_state(d), [h_index(d, r, 2) for r in range(d)], PauliType.X)
    assert measure_syndrome(column_loop).is_empty
    assert has_logical_error(column_loop) == ((True, False), (False, False))


def test_non_contractible_z_loops_are_logical_errors():
    d = 4
    row_loop = apply_chain(new_state(d), [h_index(d, 2, c) for c in range(d)], PauliType.Z)
    assert measure_syndrome(row_loop).is_empty
    assert has_logical_error(row_loop) == ((False, False), (False, True))

    column_loop = apply_chain(new_state(d), [v_index(d, r, 3) for r in range(d)], PauliType.Z)
    assert measure_syndrome(column_loop).is_empty
    assert has_logical_error(column_loop) == ((False, False), (True, False))


def test_two_parallel_loops_cancel():
    d = 5
    qubits = [v_index(d, 0, c) for c in range(d)] + [v_index(d, 3, c) for c in range(d)]
    assert not is_logical_error(apply_chain(new_state(d), qubits, PauliType.X))


def test_logical_check_requires_empty_syndrome():
    d = 3
    with pytest.raises(ContractViolation):
        has_logical_error(apply_pauli(new_state(d), 0, PauliType.X))


def test_noise_extremes(rng):
    d = 4
    state, count = apply_noise(new_state(d), NoiseModel.bitflip(0.0), rng)
    assert count == 0
    assert measure_syndrome(state).is_empty

    state, count = apply_noise(new_state(d), NoiseModel.bitflip(1.0), rng)
    assert count == 2 * d * d
    assert all(state.pauli(q) == PauliType.X for q in range(state.n_qubits))

    state, count = apply_noise(new_state(d), NoiseModel.depolarizing(1.0), rng)
    assert count == 2 * d * d
    assert all(state.pauli(q) != PauliType.I for q in range(state.n_qubits))


def test_bitflip_noise_rate(rng):
    """Empirical flip frequency matches p_error."""
    flips = sum(apply_noise(new_state(5), NoiseModel.bitflip(0.1), rng)[1] for _ in range(400))
    assert abs(flips / (400 * 50) - 0.1) < 0.01


def test_depolarizing_noise_is_uniform_over_paulis(rng):
    counts = np.zeros(4, dtype=int)
    for _ in range(400):
        state, _ = apply_noise(new_state(5), NoiseModel.depolarizing(0.3), rng)
        counts += np.bincount(state.frame, minlength=4)
    hits = counts[1:] / counts[1:].sum()
    assert np.all(np.abs(hits - 1 / 3) < 0.03)
    assert abs(counts[1:].sum() / counts.sum() - 0.3) < 0.015


def test_per_pauli_depolarizing(rng):
    state, count = apply_noise(new_state(4), NoiseModel.depolarizing(1 / 3, per_pauli=True), rng)
    assert count == state.n_qubits
    with pytest.raises(ContractViolation):
        NoiseModel.depolarizing(0.4, per_pauli=True)


def test_noise_rate_validation():
    with pytest.raises(ContractViolation):
        NoiseModel(NoiseKind.BITFLIP, 1.5)
    with pytest.raises(ContractViolation):
        NoiseModel(NoiseKind.DEPOLARIZING, -0.1)


def test_noise_consumes_stream_identically_across_rates():
    """Same seed at two rates: errors at the lower rate are a subset of errors at the higher rate."""
    low, _ = apply_noise(new_state(5), NoiseModel.bitflip(0.05), np.random.default_rng(3))
    high, _ = apply_noise(new_state(5), NoiseModel.bitflip(0.2), np.random.default_rng(3))
    assert np.all(high.frame[low.frame == 1] == 1)
