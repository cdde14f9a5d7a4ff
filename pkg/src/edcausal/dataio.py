"""Codecs for the competition file formats and real-world log ingestion.

Formats: NPY v1.0 arrays, zipped submissions, train.csv trajectories, query
JSON/text files, and the answer-log / metadata CSVs of the real-world tasks.
Every codec round-trips exactly on canonical input.
"""
from __future__ import annotations

import ast
import csv
import io
import json
import math
import struct
import zipfile
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import EFFECT_TIME, CateQuery, SyntheticDataset, Trajectory


class FormatError(ValueError):
    """Malformed input; ``code`` is a stable machine-readable identifier."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


class SubmissionError(FormatError):
    pass


def _text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return source.decode("utf-8-sig")
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        return Path(source).read_text(encoding="utf-8-sig")
    if isinstance(source, str):
        return source
    return source.read()


# -- NPY v1.0 ---------------------------------------------------------------

NPY_MAGIC = b"\x93NUMPY"
NPY_ALIGN = 64
# dtypes accepted on read; the first three are what the writer emits
NPY_DTYPES = ("<f8", "<i8", "|b1", "<f4", "<i4", "<i2", "|i1", "|u1", "<u2", "<u4", "<u8")


def _descr(dtype: np.dtype) -> str:
    d = np.dtype(dtype)
    if d.kind == "b":
        return "|b1"
    s = d.newbyteorder("<").str if d.byteorder not in "|" else d.str
    return s


def write_npy(array) -> bytes:
    """Serialize ``array`` as an NPY v1.0 buffer with a 64-byte aligned preamble."""
    arr = np.asarray(array)
    descr = _descr(arr.dtype)
    if descr not in NPY_DTYPES:
        raise FormatError("UNSUPPORTED_DTYPE", f"cannot write dtype {arr.dtype}")
    shape = tuple(int(s) for s in arr.shape)
    shape_txt = "(" + ", ".join(str(s) for s in shape) + ("," if len(shape) == 1 else "") + ")"
    header = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_txt}, }}"
    pad = NPY_ALIGN - (len(NPY_MAGIC) + 4 + len(header) + 1) % NPY_ALIGN
    header = header + " " * (pad % NPY_ALIGN) + "\n"
    if len(header) > 0xFFFF:
        raise FormatError("BAD_HEADER", "header too long for a v1.0 container")
    data = np.ascontiguousarray(arr, dtype=np.dtype(descr)).tobytes(order="C")
    return NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(header)) + header.encode("latin1") + data


def read_npy(buf: bytes) -> np.ndarray:
    """Parse an NPY v1.0 buffer; raises FormatError with a specific code."""
    buf = bytes(buf)
    if len(buf) < 10 or buf[:6] != NPY_MAGIC:
        raise FormatError("BAD_MAGIC", "not an NPY buffer")
    if buf[6:8] != b"\x01\x00":
        raise FormatError("UNSUPPORTED_VERSION", f"version {buf[6]}.{buf[7]}")
    (hlen,) = struct.unpack("<H", buf[8:10])
    if len(buf) < 10 + hlen:
        raise FormatError("TRUNCATED", "buffer ends inside the header")
    try:
        header = ast.literal_eval(buf[10 : 10 + hlen].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError("BAD_HEADER", str(exc)) from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError("BAD_HEADER", "header must have keys descr, fortran_order, shape")
    descr, fortran, shape = header["descr"], header["fortran_order"], header["shape"]
    if descr not in NPY_DTYPES:
        raise FormatError("UNSUPPORTED_DTYPE", f"dtype {descr!r}")
    if fortran is not False:
        raise FormatError("FORTRAN_ORDER", "only C-order arrays are supported")
    if not isinstance(shape, tuple) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise FormatError("BAD_HEADER", f"bad shape {shape!r}")
    dtype = np.dtype(descr)
    nbytes = dtype.itemsize * math.prod(shape)
    body = buf[10 + hlen :]
    if len(body) < nbytes:
        raise FormatError("TRUNCATED", f"expected {nbytes} data bytes, got {len(body)}")
    if len(body) > nbytes:
        raise FormatError("TRAILING_DATA", f"{len(body) - nbytes} bytes after the array")
    return np.frombuffer(body, dtype=dtype).reshape(shape).copy()


def save_npy(path, array) -> None:
    Path(path).write_bytes(write_npy(array))


def load_npy(path) -> np.ndarray:
    return read_npy(Path(path).read_bytes())


# -- zipped submissions -----------------------------------------------------

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def pack_submission(payload, name: str) -> bytes:
    """Single-entry stored zip; ``payload`` is NPY bytes or an array."""
    data = payload if isinstance(payload, (bytes, bytearray)) else write_npy(payload)
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
        info.external_attr = 0o644 << 16
        zf.writestr(info, bytes(data))
    return out.getvalue()


def unpack_submission(zip_bytes: bytes, name: str | None = None) -> bytes:
    try:
        zf = zipfile.ZipFile(io.BytesIO(zip_bytes))
    except (zipfile.BadZipFile, ValueError) as exc:
        raise SubmissionError("ZIP_INVALID", str(exc)) from None
    with zf:
        entries = zf.infolist()
        if not entries:
            raise SubmissionError("ZIP_EMPTY", "archive has no members")
        if len(entries) > 1:
            raise SubmissionError("ZIP_MULTI_ENTRY", f"{len(entries)} members, expected one")
        member = entries[0].filename
        if name is not None and member != name:
            raise SubmissionError("WRONG_MEMBER_NAME", f"member {member!r}, expected {name!r}")
        try:
            return zf.read(member)
        except (zipfile.BadZipFile, OSError) as exc:
            raise SubmissionError("ZIP_INVALID", str(exc)) from None


# -- train.csv --------------------------------------------------------------


def train_csv_header(n: int) -> list[str]:
    return ["student_id", "bot_action"] + [f"construct_{i}" for i in range(n)]


def encode_train_csv(dataset: SyntheticDataset) -> str:
    """Floats use the shortest round-trip representation."""
    lines = [",".join(train_csv_header(dataset.num_constructs))]
    for traj in dataset:
        sid = str(int(traj.student_id))
        for a, row in zip(traj.actions.tolist(), traj.probs.tolist()):
            lines.append(sid + "," + str(a) + "," + ",".join(map(repr, row)))
    return "\n".join(lines) + "\n"


def decode_train_csv(text: str) -> SyntheticDataset:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise FormatError("EMPTY_CSV", "no header row")
    header = [h.strip() for h in rows[0]]
    n = len(header) - 2
    if n < 1 or header != train_csv_header(n):
        raise FormatError("BAD_HEADER", "expected student_id,bot_action,construct_0,...")
    body = rows[1:]
    if not body:
        raise FormatError("EMPTY_CSV", "header only")
    if any(len(r) != n + 2 for r in body):
        raise FormatError("BAD_CELL", "row length differs from header")
    try:
        ids = np.array([int(r[0]) for r in body], dtype=np.int64)
        actions = np.array([int(r[1]) for r in body], dtype=np.int64)
        probs = np.array([r[2:] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise FormatError("BAD_CELL", str(exc)) from None
    if np.any((actions < 0) | (actions >= n)):
        raise FormatError("ACTION_RANGE", f"bot_action outside [0, {n - 1}]")
    if not np.all(np.isfinite(probs)) or np.any((probs < 0) | (probs > 1)):
        raise FormatError("PROB_RANGE", "construct values must lie in [0, 1]")
    if np.any(ids < 0):
        raise FormatError("BAD_CELL", "negative student_id")
    # group by student in order of first appearance, keeping row order within a student
    order: dict[int, list[int]] = {}
    for k, sid in enumerate(ids.tolist()):
        order.setdefault(sid, []).append(k)
    return SyntheticDataset(tuple(Trajectory(sid, actions[idx], probs[idx]) for sid, idx in order.items()))


def write_train_csv(path, dataset: SyntheticDataset) -> None:
    Path(path).write_text(encode_train_csv(dataset), encoding="utf-8")


def read_train_csv(path) -> SyntheticDataset:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(path)
    return decode_train_csv(p.read_text(encoding="utf-8-sig"))


# -- query files ------------------------------------------------------------

QUERY_KEYS = {"conditioning", "intervention", "reference", "effect_mask"}


def _num(x: float):
    return int(x) if float(x).is_integer() and abs(x) < 2**53 else float(x)


def _query_to_obj(q: CateQuery) -> dict:
    cond = [[_num(r[0])] + [float(v) for v in r[1:]] for r in q.conditioning.tolist()]
    blank = [None] * q.num_constructs
    return {
        "conditioning": cond,
        "intervention": [[q.intervention] + blank],
        "reference": [[q.reference] + blank],
        "effect_mask": q.effect_mask().tolist(),
    }


def encode_queries_json(queries: Sequence[CateQuery]) -> str:
    return json.dumps([_query_to_obj(q) for q in queries], allow_nan=False)


def _missing(v) -> bool:
    return v is None or v == "NaN" or (isinstance(v, float) and math.isnan(v))


def _bot_value(obj, key: str, n: int) -> int:
    vec = obj[key]
    if not (isinstance(vec, list) and len(vec) == 1 and isinstance(vec[0], list) and len(vec[0]) == n + 1):
        raise FormatError("QUERY_SHAPE", f"{key} must have shape [1, {n + 1}]")
    row = vec[0]
    if not all(_missing(v) for v in row[1:]):
        raise FormatError("QUERY_SHAPE", f"{key} may only set the bot_action entry")
    v = row[0]
    if _missing(v) or isinstance(v, bool) or not isinstance(v, (int, float)) or not float(v).is_integer():
        raise FormatError("QUERY_VALUE", f"{key} bot_action must be an integer")
    return int(v)


def _obj_to_query(obj) -> CateQuery:
    if not isinstance(obj, dict) or set(obj) != QUERY_KEYS:
        raise FormatError("QUERY_KEYS", f"expected keys {sorted(QUERY_KEYS)}")
    try:
        cond = np.array(obj["conditioning"], dtype=np.float64)
    except (ValueError, TypeError):
        raise FormatError("QUERY_SHAPE", "conditioning must be a numeric matrix") from None
    if cond.ndim != 2 or cond.shape[1] < 2 or cond.shape[0] < 1:
        raise FormatError("QUERY_SHAPE", f"conditioning must be [L+1, n+1], got {cond.shape}")
    n = cond.shape[1] - 1
    c_i = _bot_value(obj, "intervention", n)
    c_r = _bot_value(obj, "reference", n)
    mask = obj["effect_mask"]
    if not (isinstance(mask, list) and mask and all(isinstance(r, list) and len(r) == n + 1 for r in mask)):
        raise FormatError("QUERY_SHAPE", f"effect_mask must be [T, {n + 1}]")
    if not all(isinstance(v, bool) or v in (0, 1) for r in mask for v in r):
        raise FormatError("QUERY_VALUE", "effect_mask entries must be boolean")
    hits = np.argwhere(np.array(mask, dtype=bool))
    if len(hits) == 0:
        raise FormatError("MASK_EMPTY", "effect_mask has no true entry")
    if len(hits) > 1:
        raise FormatError("MASK_MULTIPLE", "effect_mask has more than one true entry")
    t, j = (int(v) for v in hits[0])
    if j == 0:
        raise FormatError("MASK_BOT", "effect_mask cannot target bot_action")
    try:
        return CateQuery(cond, c_i, c_r, j - 1, effect_time=t)
    except ValueError as exc:
        raise FormatError("QUERY_VALUE", str(exc)) from None


def decode_queries_json(text: str) -> list[CateQuery]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError("BAD_JSON", str(exc)) from None
    if not isinstance(data, list):
        raise FormatError("QUERY_KEYS", "top level must be a list")
    return [_obj_to_query(obj) for obj in data]


def write_queries_json(path, queries: Sequence[CateQuery]) -> None:
    Path(path).write_text(encode_queries_json(queries), encoding="utf-8")


def read_queries_json(path) -> list[CateQuery]:
    return decode_queries_json(Path(path).read_text(encoding="utf-8"))


def write_query_txt(queries: Sequence[CateQuery]) -> str:
    """Human-readable summary; conditioning length counts from time 0."""
    blocks = []
    for k, q in enumerate(queries):
        blocks.append(
            "\n".join(
                [
                    f"CATE number:{k}",
                    f"Conditioning_length:{q.conditioning_length}",
                    f"Bot intervention:{q.intervention}",
                    f"Bot reference:{q.reference}",
                    f"Effect construct:{q.target}",
                    f"Effect time:{EFFECT_TIME}",
                ]
            )
        )
    return "\n\n".join(blocks) + "\n"


# -- real-world answer logs -------------------------------------------------

EVENT_TYPES = ("Checkin", "CheckinRetry", "Lesson", "Checkout", "CheckoutRetry")
_TYPE_RANK = {t: k for k, t in enumerate(EVENT_TYPES)}
FIRST_ATTEMPTS = ("Checkin", "Checkout")
ANSWER_COLUMNS = (
    "QuizSessionId", "AnswerId", "UserId", "QuizId", "QuestionId", "IsCorrect",
    "AnswerValue", "CorrectAnswer", "QuestionSequence", "ConstructId", "Type", "Timestamp",
)
_MISSING = {"", "none", "null", "nan", "na"}


@dataclass(frozen=True)
class AnswerEvent:
    quiz_session_id: int
    answer_id: int | None
    user_id: int
    quiz_id: int
    question_id: int | None
    is_correct: int | None
    answer_value: int | None
    correct_answer: int | None
    question_sequence: int
    construct_id: int
    type: str
    timestamp: datetime

    @property
    def is_answer(self) -> bool:
        return self.type != "Lesson"

    def sort_key(self):
        return (
            self.timestamp,
            self.quiz_session_id,
            self.question_sequence,
            _TYPE_RANK[self.type],
            -1 if self.answer_id is None else self.answer_id,
            -1 if self.question_id is None else self.question_id,
        )

    def to_row(self) -> list[str]:
        f = lambda v: "" if v is None else str(v)
        return [
            f(self.quiz_session_id), f(self.answer_id), f(self.user_id), f(self.quiz_id), f(self.question_id),
            f(self.is_correct), f(self.answer_value), f(self.correct_answer), f(self.question_sequence),
            f(self.construct_id), self.type, self.timestamp.isoformat(),
        ]


def _opt_int(v: str, col: str, line: int) -> int | None:
    v = v.strip()
    if v.lower() in _MISSING:
        return None
    try:
        return int(float(v)) if "." in v else int(v)
    except ValueError:
        raise FormatError("BAD_CELL", f"line {line}: {col}={v!r}") from None


def _req_int(v: str, col: str, line: int) -> int:
    out = _opt_int(v, col, line)
    if out is None:
        raise FormatError("MISSING_VALUE", f"line {line}: {col} is required")
    return out


def parse_timestamp(v: str) -> datetime:
    v = v.strip()
    if v.endswith("Z"):
        v = v[:-1] + "+00:00"
    return datetime.fromisoformat(v)


def read_answer_log(source) -> list[AnswerEvent]:
    """Parse answer-log CSV text (or a path); rows keep their input order."""
    reader = csv.DictReader(io.StringIO(_text(source)))
    if reader.fieldnames is None:
        raise FormatError("EMPTY_CSV", "no header row")
    missing = [c for c in ANSWER_COLUMNS if c not in [f.strip() for f in reader.fieldnames]]
    if missing:
        raise FormatError("BAD_HEADER", f"missing columns {missing}")
    events = []
    for line, raw in enumerate(reader, start=2):
        row = {k.strip(): (v or "") for k, v in raw.items() if k is not None}
        typ = row["Type"].strip()
        if typ not in _TYPE_RANK:
            raise FormatError("UNKNOWN_TYPE", f"line {line}: Type={typ!r}")
        try:
            ts = parse_timestamp(row["Timestamp"])
        except ValueError:
            raise FormatError("BAD_TIMESTAMP", f"line {line}: {row['Timestamp']!r}") from None
        ev = AnswerEvent(
            quiz_session_id=_req_int(row["QuizSessionId"], "QuizSessionId", line),
            answer_id=_opt_int(row["AnswerId"], "AnswerId", line),
            user_id=_req_int(row["UserId"], "UserId", line),
            quiz_id=_req_int(row["QuizId"], "QuizId", line),
            question_id=_opt_int(row["QuestionId"], "QuestionId", line),
            is_correct=_opt_int(row["IsCorrect"], "IsCorrect", line),
            answer_value=_opt_int(row["AnswerValue"], "AnswerValue", line),
            correct_answer=_opt_int(row["CorrectAnswer"], "CorrectAnswer", line),
            question_sequence=_req_int(row["QuestionSequence"], "QuestionSequence", line),
            construct_id=_req_int(row["ConstructId"], "ConstructId", line),
            type=typ,
            timestamp=ts,
        )
        if ev.is_answer and ev.is_correct not in (0, 1):
            raise FormatError("MISSING_CORRECTNESS", f"line {line}: {typ} row needs IsCorrect 0/1")
        events.append(ev)
    return events


@dataclass
class IngestedLog:
    sequences: dict[int, tuple[AnswerEvent, ...]]
    summary: dict[str, int]
    warnings: list[str] = field(default_factory=list)

    @property
    def events(self) -> list[AnswerEvent]:
        return [e for seq in self.sequences.values() for e in seq]


def ingest_answer_log(source) -> IngestedLog:
    """Group events per user and sort them into a total, input-order-free order."""
    events = source if isinstance(source, list) else read_answer_log(source)
    warnings = []
    last: dict[int, datetime] = {}
    for ev in events:
        prev = last.get(ev.quiz_session_id)
        if prev is not None and ev.timestamp < prev:
            warnings.append(f"session {ev.quiz_session_id}: timestamp {ev.timestamp.isoformat()} goes backwards")
        last[ev.quiz_session_id] = ev.timestamp if prev is None else max(prev, ev.timestamp)
    by_user: dict[int, list[AnswerEvent]] = defaultdict(list)
    for ev in events:
        by_user[ev.user_id].append(ev)
    sequences = {u: tuple(sorted(evs, key=AnswerEvent.sort_key)) for u, evs in sorted(by_user.items())}
    summary = {
        "quiz_attempts": len({e.quiz_session_id for e in events}),
        "students": len(sequences),
        "answers": sum(e.is_answer for e in events),
        "lessons": sum(not e.is_answer for e in events),
        "constructs": len({e.construct_id for e in events}),
        "events": len(events),
    }
    return IngestedLog(sequences, summary, warnings)


def write_events_csv(path, log: IngestedLog) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ANSWER_COLUMNS)
        for ev in log.events:
            w.writerow(ev.to_row())


@dataclass(frozen=True)
class ConstructSeries:
    """Per-student rolling-correctness trajectories over a fixed construct list."""

    constructs: tuple[int, ...]
    dataset: SyntheticDataset

    def index(self, construct_id: int) -> int:
        return self.constructs.index(construct_id)


def _student_series(events: Sequence[AnswerEvent], col: Mapping[int, int], window: int):
    m = len(col)
    current = np.full(m, 0.5)
    history: dict[int, list[int]] = defaultdict(list)
    actions, rows = [], []
    for ev in events:
        if ev.type not in FIRST_ATTEMPTS and ev.type != "Lesson":
            continue  # retries are not separate steps
        c = col.get(ev.construct_id)
        if c is None:
            continue
        if ev.type in FIRST_ATTEMPTS:
            h = history[c]
            h.append(ev.is_correct)
            del h[:-window]
            current[c] = sum(h) / len(h)
        actions.append(c)
        rows.append(current.copy())
    return actions, rows


def build_construct_series(
    log: IngestedLog | Mapping[int, Sequence[AnswerEvent]],
    window: int = 5,
    constructs: Sequence[int] | None = None,
) -> ConstructSeries:
    """Rolling mean of first-attempt correctness per construct, one row per step.

    A step is a first-attempt answer or a lesson; bot_action is that step's
    construct. Values carry forward between answers and start at 0.5.
    Events on constructs outside ``constructs`` are dropped.
    """
    if window < 1:
        raise ValueError("window must be positive")
    seqs = log.sequences if isinstance(log, IngestedLog) else log
    if constructs is None:
        constructs = sorted({e.construct_id for evs in seqs.values() for e in evs})
    constructs = tuple(int(c) for c in constructs)
    if len(set(constructs)) != len(constructs) or not constructs:
        raise ValueError("construct list must be non-empty and unique")
    col = {c: k for k, c in enumerate(constructs)}
    trajs = []
    for user, evs in seqs.items():
        actions, rows = _student_series(evs, col, window)
        if rows:
            trajs.append(Trajectory(int(user), np.array(actions), np.array(rows)))
    if not trajs:
        raise FormatError("NO_EVENTS", "no answers or lessons on the requested constructs")
    return ConstructSeries(constructs, SyntheticDataset(tuple(trajs)))


# -- metadata ---------------------------------------------------------------


@dataclass(frozen=True)
class Subject:
    subject_id: int
    name: str
    parent_id: int | None
    level: int


@dataclass(frozen=True)
class TopicPathwayRow:
    quiz_id: int
    quiz_sequence: int
    question_sequence: int
    checkin_question_id: int
    checkout_question_id: int
    construct_id: int
    subject_id: int | None
    level: str
    year_group: int | None
    question_subject_ids: tuple[int, ...]


@dataclass(frozen=True)
class StudentInfo:
    user_id: int
    gender: str | None
    month_of_birth: str | None
    year_group: int | None
    is_pupil_premium: int | None


def _rows(source) -> list[dict[str, str]]:
    reader = csv.DictReader(io.StringIO(_text(source)))
    return [{k.strip(): (v or "").strip() for k, v in r.items() if k is not None} for r in reader]


def _blank(v: str) -> str | None:
    return None if v.lower() in _MISSING else v


def read_subject_metadata(source) -> tuple[dict[int, Subject], list[str]]:
    subjects = {}
    for line, r in enumerate(_rows(source), start=2):
        sid = _req_int(r.get("SubjectId", ""), "SubjectId", line)
        subjects[sid] = Subject(
            sid, r.get("Name", ""), _opt_int(r.get("ParentId", ""), "ParentId", line),
            _req_int(r.get("Level", ""), "Level", line),
        )
    warnings = []
    for s in subjects.values():
        if s.parent_id is None:
            if s.level != 0:
                warnings.append(f"subject {s.subject_id}: root with Level {s.level}")
        elif s.parent_id not in subjects:
            warnings.append(f"subject {s.subject_id}: dangling ParentId {s.parent_id}")
        elif subjects[s.parent_id].level != s.level - 1:
            warnings.append(f"subject {s.subject_id}: Level {s.level} under parent Level {subjects[s.parent_id].level}")
    return subjects, warnings


def subject_path(subjects: Mapping[int, Subject], subject_id: int) -> list[str]:
    """Names from ``subject_id`` up to its root; stops on dangling or cyclic links."""
    names, seen, cur = [], set(), subject_id
    while cur is not None and cur in subjects and cur not in seen:
        seen.add(cur)
        names.append(subjects[cur].name)
        cur = subjects[cur].parent_id
    return names


def read_topic_pathway(source) -> list[TopicPathwayRow]:
    out = []
    for line, r in enumerate(_rows(source), start=2):
        subj = r.get("QuestionSubjectIds", "").strip("[]\" ")
        out.append(
            TopicPathwayRow(
                quiz_id=_req_int(r.get("QuizId", ""), "QuizId", line),
                quiz_sequence=_req_int(r.get("QuizSequence", ""), "QuizSequence", line),
                question_sequence=_req_int(r.get("QuestionSequence", ""), "QuestionSequence", line),
                checkin_question_id=_req_int(r.get("CheckinQuestionId", ""), "CheckinQuestionId", line),
                checkout_question_id=_req_int(r.get("CheckoutQuestionId", ""), "CheckoutQuestionId", line),
                construct_id=_req_int(r.get("ConstructId", ""), "ConstructId", line),
                subject_id=_opt_int(r.get("SubjectId", ""), "SubjectId", line),
                level=r.get("Level", ""),
                year_group=_opt_int(r.get("YearGroup", ""), "YearGroup", line),
                question_subject_ids=tuple(int(x) for x in subj.split(",") if x.strip()),
            )
        )
    return out


def read_student_metadata(source) -> dict[int, StudentInfo]:
    out = {}
    for line, r in enumerate(_rows(source), start=2):
        uid = _req_int(r.get("UserId", ""), "UserId", line)
        out[uid] = StudentInfo(
            uid,
            _blank(r.get("Gender", "")),
            _blank(r.get("MonthOfBirth", "")),
            _opt_int(r.get("YearGroup", ""), "YearGroup", line),
            _opt_int(r.get("IsPupilPremium", ""), "IsPupilPremium", line),
        )
    return out


@dataclass
class Metadata:
    subjects: dict[int, Subject]
    topic_pathway: list[TopicPathwayRow]
    students: dict[int, StudentInfo]
    warnings: list[str]

    def year_groups(self) -> dict[int, int]:
        return {u: s.year_group for u, s in self.students.items() if s.year_group is not None}


def read_metadata(folder) -> Metadata:
    """Read whichever of the three metadata CSVs exist in ``folder``."""
    folder = Path(folder)
    subjects, warnings = {}, []
    if (folder / "subject_metadata.csv").exists():
        subjects, warnings = read_subject_metadata(folder / "subject_metadata.csv")
    pathway = read_topic_pathway(folder / "topic_pathway_metadata.csv") if (folder / "topic_pathway_metadata.csv").exists() else []
    students = read_student_metadata(folder / "student_metadata.csv") if (folder / "student_metadata.csv").exists() else {}
    return Metadata(subjects, pathway, students, warnings)


def read_construct_list(source) -> list[int]:
    """constructs_input_test.csv: one ConstructId per row (header optional)."""
    out = []
    for row in csv.reader(io.StringIO(_text(source))):
        if not row or not row[0].strip():
            continue
        try:
            out.append(int(row[0]))
        except ValueError:
            if out:
                raise FormatError("BAD_CELL", f"construct id {row[0]!r}") from None
    return out


# -- folder layouts ---------------------------------------------------------


def _numbered(folder: Path, prefix: str, suffix: str = "") -> list[Path]:
    found = []
    for p in folder.iterdir():
        stem = p.name[len(prefix) :]
        if p.name.startswith(prefix) and stem.endswith(suffix):
            core = stem[: len(stem) - len(suffix)] if suffix else stem
            if core.isdigit():
                found.append((int(core), p))
    return [p for _, p in sorted(found)]


def read_task1_folder(folder) -> list[SyntheticDataset]:
    """``dataset_<d>/train.csv`` for every d, in numeric order."""
    dirs = _numbered(Path(folder), "dataset_")
    if not dirs:
        raise FileNotFoundError(f"no dataset_<d> folders in {folder}")
    return [read_train_csv(d / "train.csv") for d in dirs]


def read_task2_folder(folder) -> list[list[CateQuery]]:
    files = _numbered(Path(folder), "intervention_", ".json")
    if not files:
        raise FileNotFoundError(f"no intervention_<d>.json files in {folder}")
    return [read_queries_json(f) for f in files]
