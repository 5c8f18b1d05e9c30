import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfkmer.kmers import (
    FlowReport,
    TransitionTable,
    assemble_z,
    assemble_z_prime,
    check_flow,
    count_kmers_batch,
    count_vector_csv,
    flow_constraint_matrix,
    h_size,
    hat_f,
    kmer_count_vector,
    kmer_string,
    project_to_H,
    rational_rank,
    reconstruct_counts,
    restore_from_H,
    split_nonoverlapping,
    theta_pairs,
    transition_counts,
    transition_table_csv,
    z_from_z_prime,
)


def all_sequences(length):
    for bits in itertools.product("01", repeat=length):
        yield "".join(bits)


def brute_counts(seq, k):
    """Independent oracle: literal substring scan."""
    counts = np.zeros(1 << k, dtype=np.int64)
    for i in range(len(seq) - k + 1):
        counts[int(seq[i : i + k], 2)] += 1
    return counts


class TestCountVector:
    def test_worked_example_k1(self):
        assert kmer_count_vector("00111000", 1).tolist() == [5, 3]

    def test_worked_example_k2(self):
        assert kmer_count_vector("001111000", 2).tolist() == [3, 1, 1, 3]

    def test_short_sequence_is_zero(self):
        assert kmer_count_vector("01", 3).tolist() == [0] * 8

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_against_brute_force(self, k):
        for seq in all_sequences(6):
            assert kmer_count_vector(seq, k).tolist() == brute_counts(seq, k).tolist()

    @given(st.text(alphabet="01", min_size=0, max_size=40), st.integers(1, 4))
    @settings(max_examples=200)
    def test_sum_is_window_count(self, seq, k):
        total = kmer_count_vector(seq, k).sum()
        assert total == max(len(seq) - k + 1, 0)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        bits = rng.integers(0, 2, size=(20, 11), dtype=np.uint8)
        out = count_kmers_batch(bits, 2)
        for i in range(20):
            assert out[i].tolist() == kmer_count_vector(bits[i], 2).tolist()


class TestHatF:
    def test_simple(self):
        counts, tail = hat_f("0011", 1)
        assert counts.tolist() == [2, 2] and tail == "11"

    def test_all_zero(self):
        counts, tail = hat_f("00", 1)
        assert counts.tolist() == [2, 0] and tail == "00"

    def test_too_short(self):
        with pytest.raises(ValueError):
            hat_f("001", 2)

    def test_prefix_counts_are_function_of_hat_f(self):
        # k=2, mu-bar=2: prefix lengths strictly between 4 and 6.
        k, length = 2, 6
        for m_prime in (5,):
            groups = {}
            for seq in all_sequences(length):
                counts, tail = hat_f(seq, k)
                key = (tuple(counts), tail)
                val = tuple(kmer_count_vector(seq[:m_prime], k))
                groups.setdefault(key, set()).add(val)
            assert all(len(v) == 1 for v in groups.values())


class TestSplitAndTransitions:
    def test_split_examples(self):
        assert split_nonoverlapping("0011", 2) == (0b00, 0b11)
        assert split_nonoverlapping("010101", 3) == (0b010, 0b101)

    def test_split_concat_roundtrip(self):
        for seq in all_sequences(8):
            blocks = split_nonoverlapping(seq, 2)
            rebuilt = "".join(kmer_string(b, 2) for b in blocks)
            assert rebuilt == seq

    def test_bad_length(self):
        with pytest.raises(ValueError):
            split_nonoverlapping("001", 2)

    def test_transition_example_k2(self):
        table = transition_counts("0011", 2)
        assert table.mu == 1
        expected = np.zeros((4, 4), dtype=np.int64)
        expected[0b00, 0b11] = 1
        assert (table.N == expected).all()

    def test_transition_example_k1(self):
        table = transition_counts("0110", 1)
        assert table.N[0, 1] == 1 and table.N[1, 1] == 1 and table.N[1, 0] == 1
        assert table.N[0, 0] == 0 and table.N.sum() == 3

    def test_sum_equals_mu_exhaustive(self):
        for seq in all_sequences(8):
            assert transition_counts(seq, 2).N.sum() == 3


class TestReconstruction:
    def test_worked_example(self):
        table = transition_counts("0011", 2)
        f = reconstruct_counts(0b11, table, 2)
        assert f.tolist() == [1, 1, 0, 1]

    def test_k1_degenerate_form(self):
        # With k=1 there are no straddling windows: f(w) = [x_mu == w] + row sum.
        for seq in all_sequences(5):
            table = transition_counts(seq, 1)
            xmu = split_nonoverlapping(seq, 1)[-1]
            expected = np.array(
                [int(xmu == w) + int(table.N[w].sum()) for w in range(2)]
            )
            assert (reconstruct_counts(xmu, table, 1) == expected).all()

    @pytest.mark.parametrize(
        "k,mu_range",
        [(1, range(1, 5)), (2, range(1, 5)), (3, range(1, 3))],
    )
    def test_identity_exhaustive(self, k, mu_range):
        for mu in mu_range:
            for seq in all_sequences((mu + 1) * k):
                table = transition_counts(seq, k)
                xmu = split_nonoverlapping(seq, k)[-1]
                got = reconstruct_counts(xmu, table, k)
                assert (got == kmer_count_vector(seq, k)).all(), seq

    def test_theta_pairs_are_distinct(self):
        for k in (2, 3):
            for a in range(1, k):
                for w in range(1 << k):
                    pairs = theta_pairs(a, w, k)
                    assert len(set(pairs)) == 1 << k


class TestFlow:
    def test_worked_example(self):
        report = check_flow("0011", 2)
        assert report.details[0b00] == (1, 1)
        assert report.all_ok

    @pytest.mark.parametrize("k,mus", [(1, range(1, 5)), (2, range(1, 4))])
    def test_exhaustive(self, k, mus):
        for mu in mus:
            for seq in all_sequences((mu + 1) * k):
                assert check_flow(seq, k).all_ok

    def test_mutated_table_breaks_exactly_one_equation(self):
        table = transition_counts("011010", 1)
        N = table.N.copy()
        N[0, 1] += 1
        mutated = TransitionTable(N=N, mu=table.mu + 1)
        # Flow at z=0 (outgoing increased? no: incoming to 1) and z=1 unbalanced.
        x0, xmu = 0, 0
        size = 2
        bad = []
        for z in range(size):
            into = int(x0 == z) + int(mutated.N[:, z].sum() - mutated.N[z, z])
            out = int(xmu == z) + int(mutated.N[z, :].sum() - mutated.N[z, z])
            if into != out:
                bad.append(z)
        assert len(bad) == 2  # one unit moved between the two flow equations

    def test_rank_is_2_to_k(self):
        for k in (1, 2, 3):
            rows = flow_constraint_matrix(k)
            assert len(rows) == (1 << k) + 1
            assert rational_rank(rows) == 1 << k


class TestRestriction:
    def test_k1_membership(self):
        table = transition_counts("0110", 1)
        restricted = project_to_H(table)
        # keeps (0,0), (0,1); drops the source-1 row
        assert restricted.values.tolist() == [0, 1]

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_h_size(self, k):
        assert h_size(k) == (1 << (2 * k)) - (1 << k)
        table = transition_counts("0" * 2 * k + "1" * k, k)
        assert project_to_H(table).values.size == h_size(k)

    def test_restore_worked_example(self):
        table = transition_counts("0110", 1)
        restricted = project_to_H(table)
        restored = restore_from_H(restricted, x0=0, x_mu=0, mu=3)
        assert restored.N[1, 0] == 1 and restored.N[1, 1] == 1
        assert (restored.N == table.N).all()

    def test_all_ones_sequence(self):
        from cfkmer.kmers import RestrictedTransitions

        empty = RestrictedTransitions(values=np.zeros(2, dtype=np.int64), k=1)
        restored = restore_from_H(empty, x0=1, x_mu=1, mu=2)
        assert restored.N[1, 1] == 2 and restored.N.sum() == 2

    @pytest.mark.parametrize("k,mus", [(1, range(1, 5)), (2, range(1, 5))])
    def test_roundtrip_exhaustive(self, k, mus):
        for mu in mus:
            for seq in all_sequences((mu + 1) * k):
                blocks = split_nonoverlapping(seq, k)
                table = transition_counts(seq, k)
                back = restore_from_H(project_to_H(table), blocks[0], blocks[-1], mu)
                assert (back.N == table.N).all()

    def test_inconsistent_input_rejected(self):
        from cfkmer.kmers import RestrictedTransitions

        # Claims one 0->1 transition but endpoints force a negative ones-row.
        restricted = RestrictedTransitions(
            values=np.array([0, 1], dtype=np.int64), k=1
        )
        with pytest.raises(ValueError, match="inconsistent"):
            restore_from_H(restricted, x0=0, x_mu=0, mu=1)


class TestZStatistics:
    def test_z_prime_example(self):
        zp = assemble_z_prime("0011", 1)
        assert zp.first_pair == (0, 0)
        assert zp.last_pair == (1, 1)
        assert zp.restricted.values.tolist() == [1, 1]

    def test_z_recoverable_from_z_prime(self):
        for mu in range(1, 6):
            for seq in all_sequences(mu + 1):
                z = assemble_z(seq, 1)
                zp = assemble_z_prime(seq, 1)
                assert z_from_z_prime(zp).key() == z.key()

    def test_hat_f_is_function_of_z(self):
        for mu in range(1, 6):
            groups = {}
            for seq in all_sequences(mu + 1):
                key = assemble_z(seq, 1).key()
                counts, tail = hat_f(seq, 1)
                groups.setdefault(key, set()).add((tuple(counts), tail))
            assert all(len(v) == 1 for v in groups.values())

    def test_z_collisions(self):
        """Z is lossy, but only once sequences are long enough.

        For k=1 the first and last block pairs plus the transition table
        pin the whole sequence up to mu=4; the first genuine collisions
        appear at mu=5 (e.g. 000100 vs 001000).
        """
        first_collision = None
        example = None
        for mu in range(1, 7):
            seen = {}
            for seq in all_sequences(mu + 1):
                key = assemble_z(seq, 1).key()
                if key in seen and first_collision is None:
                    first_collision = mu
                    example = (seen[key], seq)
                seen.setdefault(key, seq)
            if first_collision is not None:
                break
        assert first_collision == 5
        a, b = example
        assert a != b and assemble_z(a, 1).key() == assemble_z(b, 1).key()


class TestCsv:
    def test_count_vector_csv(self):
        text = count_vector_csv(kmer_count_vector("001111000", 2), 2)
        assert text == "00,01,10,11\n3,1,1,3\n"

    def test_transition_table_csv(self):
        text = transition_table_csv(transition_counts("0011", 2))
        lines = text.strip().split("\n")
        assert lines[0] == "source,00,01,10,11"
        assert lines[1] == "00,0,0,0,1"
