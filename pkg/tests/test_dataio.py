import io
import json
import struct
import zipfile

import numpy as np
import pytest

from edcausal.core import SyntheticDataset, Trajectory
from edcausal.dataio import (
    FormatError,
    SubmissionError,
    build_construct_series,
    decode_queries_json,
    decode_train_csv,
    encode_queries_json,
    encode_train_csv,
    ingest_answer_log,
    pack_submission,
    read_answer_log,
    read_construct_list,
    read_metadata,
    read_npy,
    read_queries_json,
    read_student_metadata,
    read_subject_metadata,
    read_topic_pathway,
    subject_path,
    unpack_submission,
    write_npy,
    write_query_txt,
)
from edcausal.fixtures import TABLE2_SAMPLE, answer_log_csv


class TestNpy:
    @pytest.mark.parametrize(
        "array",
        [
            np.zeros((5, 50, 50), dtype=bool),
            np.arange(50, dtype=np.float64).reshape(5, 10) / 7,
            np.arange(-3, 4, dtype=np.int64),
            np.float64(2.5),
            np.zeros((0, 4)),
            np.array([[1, 2], [3, 4]], dtype=np.int32),
        ],
    )
    def test_matches_numpy_save_bytes(self, array):
        ref = io.BytesIO()
        np.save(ref, array)
        assert write_npy(array) == ref.getvalue()

    def test_data_sizes(self):
        assert len(write_npy(np.zeros((5, 50, 50), bool))) - 128 == 12_500
        assert len(write_npy(np.zeros((5, 10)))) - 128 == 400

    def test_preamble_alignment(self):
        for shape in [(1,), (5, 50, 50), (123456, 7)]:
            buf = write_npy(np.zeros(shape, bool))
            (hlen,) = struct.unpack("<H", buf[8:10])
            assert (10 + hlen) % 64 == 0 and buf[9 + hlen : 10 + hlen] == b"\n"

    def test_numpy_reads_our_output(self, rng):
        a = rng.normal(size=(3, 4))
        b = np.load(io.BytesIO(write_npy(a)))
        assert b.dtype == a.dtype and np.array_equal(a, b)

    def test_big_endian_input_written_little(self):
        a = np.arange(4, dtype=">f8")
        assert read_npy(write_npy(a)).dtype == np.dtype("<f8")

    def test_errors(self):
        good = write_npy(np.zeros(4))
        with pytest.raises(FormatError) as e:
            read_npy(b"NOTNPY" + good[6:])
        assert e.value.code == "BAD_MAGIC"
        with pytest.raises(FormatError) as e:
            read_npy(good[:-1])
        assert e.value.code == "TRUNCATED"
        with pytest.raises(FormatError) as e:
            read_npy(good + b"\0")
        assert e.value.code == "TRAILING_DATA"
        with pytest.raises(FormatError) as e:
            read_npy(good.replace(b"False", b"True "))
        assert e.value.code == "FORTRAN_ORDER"
        with pytest.raises(FormatError) as e:
            read_npy(good.replace(b"<f8", b"<c8"))
        assert e.value.code == "UNSUPPORTED_DTYPE"
        with pytest.raises(FormatError) as e:
            read_npy(good[:6] + b"\x02\x00" + good[8:])
        assert e.value.code == "UNSUPPORTED_VERSION"
        with pytest.raises(FormatError) as e:
            write_npy(np.array(["a"]))
        assert e.value.code == "UNSUPPORTED_DTYPE"

    def test_int_adjacency_accepted_on_read(self):
        a = np.eye(3, dtype=np.int64)
        ref = io.BytesIO()
        np.save(ref, a)
        assert np.array_equal(read_npy(ref.getvalue()), a)


class TestZip:
    def test_round_trip_and_stored(self):
        payload = write_npy(np.ones(3))
        z = pack_submission(payload, "cate_estimate.npy")
        assert unpack_submission(z, "cate_estimate.npy") == payload
        info = zipfile.ZipFile(io.BytesIO(z)).infolist()[0]
        assert info.compress_type == zipfile.ZIP_STORED

    def test_deterministic_bytes(self):
        assert pack_submission(np.ones(3), "a.npy") == pack_submission(np.ones(3), "a.npy")

    def _zip(self, members):
        out = io.BytesIO()
        with zipfile.ZipFile(out, "w") as zf:
            for m in members:
                zf.writestr(m, b"x")
        return out.getvalue()

    @pytest.mark.parametrize(
        "blob,code",
        [
            (b"garbage", "ZIP_INVALID"),
            (None, "ZIP_EMPTY"),
            (["adj_matrix.npy", "extra.npy"], "ZIP_MULTI_ENTRY"),
            (["adj.npy"], "WRONG_MEMBER_NAME"),
        ],
    )
    def test_errors(self, blob, code):
        data = blob if isinstance(blob, bytes) else self._zip(blob or [])
        with pytest.raises(SubmissionError) as e:
            unpack_submission(data, "adj_matrix.npy")
        assert e.value.code == code


class TestTrainCsv:
    TABLE1 = "student_id,bot_action,construct_0,construct_1\n0,3,0.37,0.5\n0,2,0.43,0.5\n"

    def test_table1_rows(self):
        text = self.TABLE1.replace("construct_1\n", "construct_1,construct_2,construct_3\n")
        text = text.replace("0.5\n", "0.5,0.1,0.2\n")
        ds = decode_train_csv(text)
        t = ds.trajectories[0]
        assert len(ds) == 1 and list(t.actions) == [3, 2] and list(t.probs[:, 0]) == [0.37, 0.43]

    def test_round_trip_exact(self, tiny_world):
        _, _, ds = tiny_world
        text = encode_train_csv(ds)
        back = decode_train_csv(text)
        assert back == ds
        assert encode_train_csv(back) == text

    def test_awkward_floats_round_trip(self):
        vals = [0.1, 1 / 3, 5e-324, 1 - 2**-53, 0.0, 1.0, 2.2250738585072014e-308]
        ds = SyntheticDataset((Trajectory(4, np.zeros(len(vals), int), np.array(vals)[:, None]),))
        assert decode_train_csv(encode_train_csv(ds)) == ds

    def test_students_grouped_by_first_appearance(self):
        text = "student_id,bot_action,construct_0\n7,0,0.1\n2,0,0.2\n7,0,0.3\n"
        ds = decode_train_csv(text)
        assert [t.student_id for t in ds] == [7, 2] and list(ds.trajectories[0].probs[:, 0]) == [0.1, 0.3]

    @pytest.mark.parametrize(
        "text,code",
        [
            ("", "EMPTY_CSV"),
            ("student_id,bot_action,construct_0\n", "EMPTY_CSV"),
            ("student,bot_action,construct_0\n0,0,0.5\n", "BAD_HEADER"),
            ("student_id,bot_action,construct_1\n0,0,0.5\n", "BAD_HEADER"),
            ("student_id,bot_action,construct_0\n0,0,abc\n", "BAD_CELL"),
            ("student_id,bot_action,construct_0\n0,0\n", "BAD_CELL"),
            ("student_id,bot_action,construct_0\n0,1,0.5\n", "ACTION_RANGE"),
            ("student_id,bot_action,construct_0\n0,0,1.5\n", "PROB_RANGE"),
        ],
    )
    def test_errors(self, text, code):
        with pytest.raises(FormatError) as e:
            decode_train_csv(text)
        assert e.value.code == code


class TestQueries:
    def test_fixture_decodes(self, data_dir):
        qs = read_queries_json(data_dir / "queries_141.json")
        assert [q.intervention for q in qs] == [3, 0]
        assert qs[0].target == 2 and qs[0].effect_time == 2
        assert qs[0].conditioning.shape == (141, 6)

    def test_text_summary(self, data_dir):
        qs = read_queries_json(data_dir / "queries_141.json")
        text = write_query_txt(qs)
        assert text.startswith(
            "CATE number:0\nConditioning_length:140\nBot intervention:3\nBot reference:1\n"
            "Effect construct:2\nEffect time:2\n\nCATE number:1\n"
        )
        assert text.count("CATE number:") == 2

    def test_ten_blocks(self, data_dir):
        q = read_queries_json(data_dir / "queries_141.json")[0]
        assert write_query_txt([q] * 10).count("Effect time:2") == 10

    def test_round_trip(self, data_dir):
        raw = (data_dir / "queries_141.json").read_text()
        qs = decode_queries_json(raw)
        text = encode_queries_json(qs)
        assert decode_queries_json(text) == qs
        assert encode_queries_json(decode_queries_json(text)) == text
        # canonical missing value is null
        assert '"NaN"' not in text and "null" in text

    def test_intervention_example(self):
        n = 30
        obj = {
            "conditioning": [[1] + [0.5] * n] * 3,
            "intervention": [[25] + ["NaN"] * n],
            "reference": [[4] + [None] * n],
            "effect_mask": [[False] * (n + 1), [False] * (n + 1), [False] * 8 + [True] + [False] * (n - 8)],
        }
        q = decode_queries_json(json.dumps([obj]))[0]
        assert q.intervention == 25 and q.reference == 4 and q.target == 7

    def _bad(self, **changes):
        obj = {
            "conditioning": [[0, 0.5, 0.5]] * 3,
            "intervention": [[1, None, None]],
            "reference": [[0, None, None]],
            "effect_mask": [[False] * 3, [False] * 3, [False, True, False]],
        }
        obj.update(changes)
        with pytest.raises(FormatError) as e:
            decode_queries_json(json.dumps([obj]))
        return e.value.code

    def test_errors(self):
        assert self._bad(extra=1) == "QUERY_KEYS"
        assert self._bad(intervention=[[1, None]]) == "QUERY_SHAPE"
        assert self._bad(intervention=[[1, 0.3, None]]) == "QUERY_SHAPE"
        assert self._bad(effect_mask=[[False] * 3, [False] * 3, [False, True, True]]) == "MASK_MULTIPLE"
        assert self._bad(effect_mask=[[False] * 3] * 3) == "MASK_EMPTY"
        assert self._bad(effect_mask=[[False] * 3, [False] * 3, [True, False, False]]) == "MASK_BOT"
        assert self._bad(reference=[[1, None, None]]) == "QUERY_VALUE"


class TestAnswerLog:
    def test_table_sample(self):
        log = ingest_answer_log(TABLE2_SAMPLE)
        seq = log.sequences[5]
        assert [e.type for e in seq] == ["Checkin", "CheckinRetry", "Lesson", "Checkout", "Checkin"]
        assert [e.is_correct for e in seq] == [0, 0, None, 1, 1]
        assert seq[2].answer_id is None and seq[2].answer_value is None and seq[2].correct_answer is None
        assert log.summary == {
            "quiz_attempts": 1, "students": 1, "answers": 4, "lessons": 1, "constructs": 2, "events": 5,
        }

    def test_two_students(self):
        log = ingest_answer_log(answer_log_csv(num_students=2))
        assert sorted(log.sequences) == [0, 1]

    def test_row_order_does_not_matter(self, rng):
        text = answer_log_csv(num_students=3, quizzes=2)
        header, *rows = text.strip().split("\n")
        shuffled = "\n".join([header] + [rows[i] for i in rng.permutation(len(rows))]) + "\n"
        assert ingest_answer_log(shuffled).sequences == ingest_answer_log(text).sequences

    def test_unknown_type(self):
        with pytest.raises(FormatError) as e:
            read_answer_log(TABLE2_SAMPLE.replace("Checkout,", "Quiz,"))
        assert e.value.code == "UNKNOWN_TYPE"

    def test_missing_column(self):
        with pytest.raises(FormatError) as e:
            read_answer_log(TABLE2_SAMPLE.replace("Timestamp", "When"))
        assert e.value.code == "BAD_HEADER"

    def test_backwards_time_is_a_warning(self):
        text = TABLE2_SAMPLE.replace("06:27:03", "06:00:00")
        log = ingest_answer_log(text)
        assert len(log.warnings) == 1 and log.summary["events"] == 5


class TestConstructSeries:
    def test_single_event(self):
        text = TABLE2_SAMPLE.split("\n")[0] + "\n" + TABLE2_SAMPLE.split("\n")[1] + "\n"
        s = build_construct_series(ingest_answer_log(text))
        t = s.dataset.trajectories[0]
        assert len(t) == 1 and t.probs.tolist() == [[0.0]]

    def test_table_sample_hand_computed(self):
        s = build_construct_series(ingest_answer_log(TABLE2_SAMPLE))
        assert s.constructs == (427, 433)
        t = s.dataset.trajectories[0]
        # retry skipped; lesson carries values; checkout: mean(0, 1) = 0.5; 427 unseen until the last step
        assert t.actions.tolist() == [1, 1, 1, 0]
        assert t.probs.tolist() == [[0.5, 0.0], [0.5, 0.0], [0.5, 0.5], [1.0, 0.5]]

    def test_rolling_window(self):
        rows = [TABLE2_SAMPLE.split("\n")[0]]
        for k, ok in enumerate([1, 0, 1, 1]):
            rows.append(f"1,{k},9,1,1,{ok},1,1,1,50,Checkin,2022-01-01T00:0{k}:00")
        s = build_construct_series(ingest_answer_log("\n".join(rows) + "\n"), window=3)
        assert s.dataset.trajectories[0].probs[:, 0].tolist() == [1.0, 0.5, 2 / 3, 2 / 3]

    def test_all_correct(self):
        rows = [TABLE2_SAMPLE.split("\n")[0]]
        rows += [f"1,{k},9,1,1,1,1,1,1,50,Checkin,2022-01-01T00:{k:02d}:00" for k in range(8)]
        s = build_construct_series(ingest_answer_log("\n".join(rows) + "\n"))
        assert np.all(s.dataset.trajectories[0].probs[5:] == 1.0)


class TestMetadata:
    SUBJECTS = "SubjectId,Name,ParentId,Level\n3,Maths,,0\n32,Number,3,1\n144,Fractions,32,2\n200,Orphan,999,3\n"

    def test_chain_resolves_to_maths(self):
        subjects, warnings = read_subject_metadata(self.SUBJECTS)
        assert subject_path(subjects, 144) == ["Fractions", "Number", "Maths"]
        assert len(warnings) == 1 and "dangling" in warnings[0]

    def test_blank_demographics(self):
        students = read_student_metadata("UserId,Gender,MonthOfBirth,YearGroup,IsPupilPremium\n5,,,,\n6,female,2010-05-01,7,1\n")
        assert students[5].gender is None and students[5].year_group is None
        assert students[6].year_group == 7 and students[6].is_pupil_premium == 1
        assert len(students) == 2

    def test_topic_pathway_subject_lists(self):
        text = (
            "QuizId,QuizSequence,Level,YearGroup,QuestionSequence,CheckinQuestionId,CheckoutQuestionId,"
            "ConstructId,SubjectId,QuestionSubjectIds\n1,1,L1,7,1,10,11,433,144,\"3,32,144\"\n"
        )
        (row,) = read_topic_pathway(text)
        assert row.question_subject_ids == (3, 32, 144) and row.construct_id == 433

    def test_read_folder(self, tmp_path):
        (tmp_path / "subject_metadata.csv").write_text(self.SUBJECTS)
        (tmp_path / "student_metadata.csv").write_text("UserId,Gender,MonthOfBirth,YearGroup,IsPupilPremium\n1,,,8,\n")
        meta = read_metadata(tmp_path)
        assert meta.year_groups() == {1: 8} and len(meta.subjects) == 4 and meta.topic_pathway == []

    def test_construct_list(self):
        assert read_construct_list("ConstructId\n1030\n2066\n531\n") == [1030, 2066, 531]
        assert read_construct_list("5\n6\n") == [5, 6]
