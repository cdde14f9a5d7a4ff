"""Synthetic answer logs for tests and demos.

Real logs are proprietary, so these generators produce files in the same
schema with known ground truth (for example a planted lesson effect).
"""
from __future__ import annotations

import csv
import io
from datetime import datetime, timedelta

from .dataio import ANSWER_COLUMNS
from .simulator import make_rng

_BASE_TIME = datetime(2022, 3, 1, 6, 0, 0)

# the worked example from the data description, with a full date added
TABLE2_SAMPLE = """QuizSessionId,AnswerId,UserId,QuizId,QuestionId,IsCorrect,AnswerValue,CorrectAnswer,QuestionSequence,ConstructId,Type,Timestamp
8,57,5,232950,131432,0,2,4,2,433,Checkin,2022-03-01T06:15:01
8,58,5,232950,131432,0,3,4,2,433,CheckinRetry,2022-03-01T06:16:18
8,None,5,232950,131432,None,None,None,2,433,Lesson,2022-03-01T06:26:19
8,59,5,232950,133665,1,4,4,2,433,Checkout,2022-03-01T06:27:03
8,60,5,232950,131433,1,1,1,3,427,Checkin,2022-03-01T06:30:41
"""


class _LogWriter:
    def __init__(self):
        self.rows: list[list] = []
        self.answer_id = 0

    def add(self, session, user, quiz, question, typ, construct, seq, when, correct=None, rng=None):
        if typ == "Lesson":
            self.rows.append([session, None, user, quiz, question, None, None, None, seq, construct, typ, when])
            return
        self.answer_id += 1
        right = int(rng.integers(1, 5))
        value = right if correct else int((right % 4) + 1)
        self.rows.append([session, self.answer_id, user, quiz, question, int(correct), value, right, seq, construct, typ, when])

    def text(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(ANSWER_COLUMNS)
        for r in self.rows:
            w.writerow(["None" if v is None else (v.isoformat() if isinstance(v, datetime) else v) for v in r])
        return out.getvalue()


def _quiz(log, rng, session, user, quiz, constructs, start, p_correct, lesson_for=None):
    """One five-question topic quiz: checkin, retry + lesson on failure, checkout."""
    t = start
    for seq, c in enumerate(constructs, start=1):
        q = 100000 + 10 * c
        ok = rng.random() < p_correct
        log.add(session, user, quiz, q, "Checkin", c, seq, t, ok, rng)
        t += timedelta(seconds=40)
        if not ok:
            log.add(session, user, quiz, q, "CheckinRetry", c, seq, t, rng.random() < p_correct, rng)
            t += timedelta(seconds=40)
            log.add(session, user, quiz, q, "Lesson", lesson_for or c, seq, t)
            t += timedelta(seconds=300)
            log.add(session, user, quiz, q + 1, "Checkout", c, seq, t, rng.random() < p_correct, rng)
            t += timedelta(seconds=40)
    return t


def answer_log_csv(num_students: int = 2, quizzes: int = 3, seed: int = 0, constructs=(11, 12, 13, 14, 15)) -> str:
    """Small multi-session log in the answer-log schema."""
    rng = make_rng(seed, 7)
    log = _LogWriter()
    session = 0
    for user in range(num_students):
        t = _BASE_TIME + timedelta(days=user)
        for quiz in range(quizzes):
            session += 1
            t = _quiz(log, rng, session, user, 1000 + quiz, list(constructs), t, 0.6) + timedelta(hours=1)
    return log.text()


def ab_fixture(
    students_per_arm: int = 2000,
    delta: float = 0.15,
    base: float = 0.5,
    target: int = 471,
    treatment: int = 469,
    control: int = 2930,
    year: int = 7,
    checkouts: int = 1,
    seed: int = 0,
):
    """A/B experiment log with a planted effect ``delta`` on checkout accuracy.

    Every student answers a checkin on ``target``, takes a lesson on the
    treatment or control construct (assigned per student, alternating after
    a random shuffle), then answers ``checkouts`` checkout questions.
    Returns ``(csv_text, arms, years)``.
    """
    if not (0 <= base and base + delta <= 1):
        raise ValueError("base + delta must be a probability")
    rng = make_rng(seed, 8)
    users = rng.permutation(2 * students_per_arm)
    arms = {int(u): ("treatment" if k % 2 == 0 else "control") for k, u in enumerate(users)}
    log = _LogWriter()
    for u in sorted(arms):
        t = _BASE_TIME + timedelta(minutes=int(u))
        p = base + (delta if arms[u] == "treatment" else 0.0)
        session, quiz = u + 1, 5000
        log.add(session, u, quiz, 900, "Checkin", target, 1, t, rng.random() < base, rng)
        lesson = treatment if arms[u] == "treatment" else control
        log.add(session, u, quiz, 901, "Lesson", lesson, 1, t + timedelta(seconds=60))
        for k in range(checkouts):
            log.add(session, u, quiz, 902 + k, "Checkout", target, 1, t + timedelta(seconds=400 + 30 * k), rng.random() < p, rng)
    years = {u: year for u in arms}
    return log.text(), arms, years
