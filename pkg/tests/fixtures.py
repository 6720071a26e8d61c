"""Deterministic fixture records shared by tests and the golden generator."""

from __future__ import annotations

from pvminer.corpus import Annotation, GoldRecord, Message, Span
from pvminer.prompt import Exemplar
from pvminer.sftprep import serialize_annotations

APPENDIX_MESSAGE = (
    "Dr. Person1 I need my prescription sent to the pharmacy for my flecainide "
    "acetate 100 mg tablets twice a day the pharmacist has try requesting it no "
    "success and I don't have any pills. Person2"
)


def _record(id_, text, direction, triples):
    annotations = []
    for code, subcode, phrase in triples:
        start = text.index(phrase)
        annotations.append(Annotation(code, subcode, Span(start, start + len(phrase), phrase)))
    return GoldRecord(Message(id=id_, text=text, direction=direction), tuple(annotations))


EXEMPLAR_RECORDS = (
    _record(
        "ex-patient",
        "Hi Dr. Smith, thank you so much for seeing me yesterday. Best, Ann",
        "N",
        (
            ("PartnershipPatient", "salutation", "Hi Dr. Smith"),
            ("PartnershipPatient", "Appreciation/Gratitude", "thank you so much for seeing me yesterday"),
            ("PartnershipPatient", "signoff", "Best, Ann"),
        ),
    ),
    _record(
        "ex-provider",
        "Good morning Ann, I will follow up with cardiology and send you an update next week.",
        "Y",
        (
            ("PartnershipProvider", "salutation", "Good morning Ann"),
            ("CareCoordinationProvider", "None", "I will follow up with cardiology"),
            ("PartnershipProvider", "maintainCommunication", "send you an update next week"),
        ),
    ),
)


def exemplars(k: int) -> tuple[Exemplar, ...]:
    return tuple(
        Exemplar(message=r.message, gold=serialize_annotations(r.annotations))
        for r in EXEMPLAR_RECORDS[:k]
    )


def appendix_record() -> GoldRecord:
    return _record(
        "appendix",
        APPENDIX_MESSAGE,
        "N",
        (
            ("CareCoordinationPatient", "None", "I need my prescription sent to the pharmacy"),
        ),
    )
