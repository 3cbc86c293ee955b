import numpy as np
import pytest

from blockglm.dataio import (
    IdMap,
    LibsvmRecord,
    PartitionSpec,
    build_id_map,
    feature_hash,
    load_id_map,
    load_labels,
    load_shard,
    parse_libsvm,
    parse_libsvm_line,
    partition_features,
    repartition,
    shards_in_memory,
    write_id_map,
    write_labels,
)
from blockglm.errors import DataFormatError


class TestParseLine:
    def test_basic_example(self):
        rec = parse_libsvm_line("+1 3:0.5 7:1")
        assert rec.label == 1.0
        assert rec.entries == ((3, 0.5), (7, 1.0))

    def test_label_only_record(self):
        rec = parse_libsvm_line("-1")
        assert rec.label == -1.0
        assert rec.entries == ()

    def test_entries_sorted_by_id(self):
        rec = parse_libsvm_line("1 9:2 3:1")
        assert rec.entries == ((3, 1.0), (9, 2.0))

    def test_zero_values_dropped(self):
        rec = parse_libsvm_line("1 2:0 5:1.5 8:0.0")
        assert rec.entries == ((5, 1.5),)

    @pytest.mark.parametrize(
        "line",
        [
            "",
            "abc 1:2",
            "1 a:b",
            "1 3",
            "1 3:1 3:2",
            "1 -4:1",
            "1 2:nan",
            "nan 2:1",
        ],
    )
    def test_malformed_lines_rejected(self, line):
        with pytest.raises(DataFormatError):
            parse_libsvm_line(line, lineno=17)

    def test_error_carries_line_number(self):
        with pytest.raises(DataFormatError, match="line 17"):
            parse_libsvm_line("1 a:b", lineno=17)


class TestParseStream:
    def test_skips_blank_lines(self):
        recs = parse_libsvm(["1 1:2", "", "  ", "-1 2:3"])
        assert [r.label for r in recs] == [1.0, -1.0]

    def test_reports_original_line_numbers(self):
        with pytest.raises(DataFormatError, match="line 3"):
            parse_libsvm(["1 1:2", "", "1 oops"])


class TestIdMap:
    def test_observed_ids_sorted_dense(self):
        recs = parse_libsvm(["1 7:1 3:1", "-1 100:2"])
        idmap = build_id_map(recs)
        assert idmap.raw_ids == (3, 7, 100)
        assert idmap.to_internal() == {3: 0, 7: 1, 100: 2}

    def test_file_round_trip(self, tmp_path):
        idmap = IdMap(raw_ids=(2, 5, 9))
        path = tmp_path / "idmap.txt"
        write_id_map(idmap, path)
        assert load_id_map(path) == idmap

    def test_out_of_order_file_rejected(self, tmp_path):
        path = tmp_path / "idmap.txt"
        path.write_text("0 2\n2 5\n")
        with pytest.raises(DataFormatError):
            load_id_map(path)


class TestPartition:
    def test_deterministic(self):
        spec = PartitionSpec(M=8, seed=42)
        assignments = [spec.node_of(j) for j in range(1000)]
        assert assignments == [PartitionSpec(M=8, seed=42).node_of(j) for j in range(1000)]

    def test_disjoint_and_exhaustive(self):
        spec = partition_features(range(500), M=4, seed=1)
        buckets = [set() for _ in range(4)]
        for j in range(500):
            buckets[spec.node_of(j)].add(j)
        assert sum(len(b) for b in buckets) == 500
        union = set().union(*buckets)
        assert union == set(range(500))

    def test_seed_changes_assignment(self):
        a = [PartitionSpec(M=4, seed=0).node_of(j) for j in range(200)]
        b = [PartitionSpec(M=4, seed=1).node_of(j) for j in range(200)]
        assert a != b

    def test_roughly_balanced(self):
        spec = PartitionSpec(M=4, seed=3)
        counts = np.bincount([spec.node_of(j) for j in range(4000)], minlength=4)
        assert counts.min() > 800  # ~1000 expected per node

    def test_hash_is_stable_across_runs(self):
        # frozen values: the on-disk shard layout depends on these
        assert feature_hash(0, 0) == feature_hash(0, 0)
        assert PartitionSpec(M=1, seed=0).node_of(123) == 0

    def test_invalid_m(self):
        with pytest.raises(ValueError):
            PartitionSpec(M=0, seed=0)


LINES = [
    "1 1:0.25 3:-1.5",
    "-1 2:2.0",
    "1 1:1e-3 2:0.125 3:4.0",
    "-1",
    "1 3:0.1 17:-0.7071067811865476",
]


class TestRepartitionRoundTrip:
    @pytest.mark.parametrize("M", [1, 2, 3])
    def test_bitwise_round_trip(self, tmp_path, M):
        spec = PartitionSpec(M=M, seed=5)
        paths = repartition(LINES, spec, str(tmp_path))
        assert len(paths) == M

        records = parse_libsvm(LINES)
        idmap = build_id_map(records)
        n, p = len(records), idmap.num_features
        dense = np.zeros((n, p))
        to_internal = idmap.to_internal()
        for i, rec in enumerate(records):
            for fid, val in rec.entries:
                dense[i, to_internal[fid]] = val

        reassembled = np.zeros((n, p))
        seen_features = set()
        for path in paths:
            shard = load_shard(path)
            np.testing.assert_array_equal(shard.labels, [r.label for r in records])
            for k, j in enumerate(shard.feature_ids):
                assert j not in seen_features
                seen_features.add(j)
                rows, vals = shard.column(k)
                reassembled[rows, j] = vals
        assert seen_features == set(range(p))
        # bitwise: repr round-trip formatting preserves every double exactly
        assert np.array_equal(reassembled, dense)

    def test_in_memory_matches_files(self, tmp_path):
        records = parse_libsvm(LINES)
        mem_shards, idmap = shards_in_memory(records, 2, seed=5)
        paths = repartition(LINES, PartitionSpec(M=2, seed=5), str(tmp_path))
        for mem, path in zip(mem_shards, paths):
            disk = load_shard(path)
            assert np.array_equal(mem.feature_ids, disk.feature_ids)
            assert np.array_equal(mem.indptr, disk.indptr)
            assert np.array_equal(mem.rows, disk.rows)
            assert np.array_equal(mem.vals, disk.vals)
            assert np.array_equal(mem.labels, disk.labels)

    def test_labels_round_trip(self, tmp_path):
        path = tmp_path / "labels.txt"
        values = [1.0, -1.0, 0.3333333333333333, -2.5e-17]
        write_labels(values, path)
        assert np.array_equal(load_labels(path), values)

    def test_header_mismatch_detected(self, tmp_path):
        paths = repartition(LINES, PartitionSpec(M=1, seed=0), str(tmp_path))
        text = open(paths[0]).read().splitlines()
        head = text[0].split()
        head[6] = str(int(head[6]) + 1)  # wrong column count
        (tmp_path / "bad.txt").write_text(" ".join(head) + "\n" + "\n".join(text[1:]) + "\n")
        with pytest.raises(DataFormatError):
            load_shard(str(tmp_path / "bad.txt"), str(tmp_path / "labels.txt"))

    def test_label_count_mismatch_detected(self, tmp_path):
        paths = repartition(LINES, PartitionSpec(M=1, seed=0), str(tmp_path))
        short = tmp_path / "short_labels.txt"
        write_labels([1.0], short)
        with pytest.raises(DataFormatError):
            load_shard(paths[0], str(short))
