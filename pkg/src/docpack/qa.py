"""Conversation construction from parsed documents.

Three construction routes cover the corpus:

1. documents with reliable QA annotations (review threads) become
   review-writing and reply-writing conversations;
2. documents with a clear textual structure drive the structured proxy tasks
   (abstract writing, paper titling, caption writing, experiment writing,
   translation), with answers copied verbatim from the document;
3. externally generated QA pairs are attached via :func:`attach_external_qa`
   and explicitly marked as model-generated in the metadata.

Documents matching no task fall back to a single plain-text next-token
prediction record.  :func:`render_conversation` produces the canonical
training text, stating the paper context once and appending bare
question/answer turns after it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .errors import EmptyQAList, MissingField, NoReviews
from .ingest import (
    Document,
    ImageRef,
    InterleavedDoc,
    MultiImageDoc,
    Segment,
    SegmentKind,
    _merge_adjacent_text,
    drop_sections,
    interleave,
    render_context,
    to_interleaved,
)


class Task(Enum):
    """The QA task a conversation turn was constructed for."""

    ABSTRACT_WRITING = "abstract_writing"
    PAPER_TITLING = "paper_titling"
    CAPTION_WRITING = "caption_writing"
    EXPERIMENT_WRITING = "experiment_writing"
    TRANSLATION = "translation"
    REVIEW_WRITING = "review_writing"
    REPLY_WRITING = "reply_writing"
    EXTERNAL_GENERATED = "external_generated"
    NTP = "ntp"


STRUCTURED_TASKS = (
    Task.ABSTRACT_WRITING,
    Task.PAPER_TITLING,
    Task.CAPTION_WRITING,
    Task.EXPERIMENT_WRITING,
    Task.TRANSLATION,
)

# Headings used for section detection, matched case-insensitively after strip.
EXPERIMENT_HEADINGS = frozenset({"experiment", "experiments", "evaluation"})
ABSTRACT_HEADINGS = frozenset({"abstract"})
INTRO_HEADINGS = frozenset({"introduction", "intro"})

TEMPLATE_VERSION = "1"

_DEFAULT_QUESTIONS: dict[Task, str] = {
    Task.ABSTRACT_WRITING: (
        "Read the full text of the paper and provide a concise summary "
        "in the form of an abstract."
    ),
    Task.PAPER_TITLING: (
        "Based on the provided abstract or introduction of the research paper, "
        "please generate a concise and informative title"
    ),
    Task.CAPTION_WRITING: (
        "Give the relative texts of the images or tables, please write a caption "
        "for each image or table based on the relative texts provided."
    ),
    Task.EXPERIMENT_WRITING: (
        'Please write the "Experiments" section based on the incomplete '
        "research paper provided."
    ),
    Task.TRANSLATION: (
        "Please read the full text of the following research paper and "
        "translate the Experiments section into Chinese."
    ),
    Task.REVIEW_WRITING: (
        "Please review the following paper and provide a constructive critique. "
        "Focus on the methodology, results, and overall contributions, and "
        "highlight both strengths and areas for improvement. Your review should "
        "be detailed and insightful, offering suggestions for enhancing the research."
    ),
    Task.REPLY_WRITING: (
        "Given the following paper and its review, write a reply to address the "
        "feedback provided. Here is the review:\n{review}"
    ),
}


@dataclass(frozen=True)
class TemplateSet:
    """Versioned question templates keyed by task; overridable per deployment."""

    version: str = TEMPLATE_VERSION
    questions: Mapping[Task, str] = field(default_factory=lambda: dict(_DEFAULT_QUESTIONS))

    def question(self, task: Task) -> str:
        return self.questions[task]

    def with_overrides(self, overrides: Mapping[str, str]) -> "TemplateSet":
        """Replace selected templates; keys are task enum values."""
        merged = dict(self.questions)
        for name, text in overrides.items():
            merged[Task(name)] = text
        return TemplateSet(version=self.version, questions=merged)


DEFAULT_TEMPLATES = TemplateSet()

# Canonical conversation rendering; the paper context is stated exactly once.
CONTEXT_PREFIX = "Please read the paper: "
QUESTION_GLUE = ", and answer the question: "
ANSWER_GLUE = " Answer: "
TURN_JOIN = "\n"


@dataclass(frozen=True)
class QAPair:
    """One question/answer turn and its provenance."""

    question: str
    answer: str
    task: Task
    generated_by_model: bool = False

    def __post_init__(self):
        if self.task is Task.NTP:
            if self.question:
                raise ValueError("ntp turns carry no question")
            if not self.answer:
                raise ValueError("ntp turns need the full text as answer")
        elif not self.question or not self.answer:
            raise ValueError(f"{self.task.value} turn needs a non-empty question and answer")
        if self.generated_by_model != (self.task is Task.EXTERNAL_GENERATED):
            raise ValueError("generated_by_model must be true exactly for external turns")


@dataclass(frozen=True)
class Conversation:
    """A renderable conversation: one context plus one or more turns."""

    doc_id: str
    context: InterleavedDoc | MultiImageDoc
    turns: tuple[QAPair, ...]

    def __post_init__(self):
        if not self.turns:
            raise ValueError("conversation needs at least one turn")

    @property
    def multi_turn(self) -> bool:
        return len(self.turns) > 1

    @property
    def n_images(self) -> int:
        return self.context.n_images


def _find_section(doc: Document, headings: frozenset[str]):
    for section in doc.sections:
        if section.heading.strip().lower() in headings:
            return section
    return None


def _section_text(section) -> str:
    return "\n".join(s.text for s in section.body if s.kind is SegmentKind.TEXT)


def _relative_text(doc: Document, media_id: str) -> str:
    """The paragraph nearest the asset's first reference point.

    Prefers the text segment just before the reference; falls back to the one
    just after it, then to the empty string for unreferenced assets.
    """
    for section in doc.sections:
        for i, seg in enumerate(section.body):
            if seg.kind is SegmentKind.IMAGE and seg.media_id == media_id:
                for j in range(i - 1, -1, -1):
                    if section.body[j].kind is SegmentKind.TEXT:
                        return section.body[j].text
                for j in range(i + 1, len(section.body)):
                    if section.body[j].kind is SegmentKind.TEXT:
                        return section.body[j].text
                return ""
    return ""


def _build_abstract_writing(doc: Document, templates: TemplateSet) -> Conversation:
    if not doc.abstract:
        raise MissingField(Task.ABSTRACT_WRITING.value, "abstract")
    context = interleave(doc, drop_sections(doc, ABSTRACT_HEADINGS).sections)
    turn = QAPair(templates.question(Task.ABSTRACT_WRITING), doc.abstract, Task.ABSTRACT_WRITING)
    return Conversation(doc.id, context, (turn,))


def _build_paper_titling(doc: Document, templates: TemplateSet) -> Conversation:
    if not doc.title:
        raise MissingField(Task.PAPER_TITLING.value, "title")
    intro = _find_section(doc, INTRO_HEADINGS)
    if intro is None and doc.sections:
        intro = doc.sections[0]
    if not doc.abstract and intro is None:
        raise MissingField(Task.PAPER_TITLING.value, "abstract")
    segments: list[Segment] = []
    if doc.abstract:
        segments.append(Segment.of_text(doc.abstract))
    if intro is not None:
        segments.extend(interleave(doc, [intro], include_unreferenced=False).segments)
    context = InterleavedDoc(_merge_adjacent_text(segments))
    turn = QAPair(templates.question(Task.PAPER_TITLING), doc.title, Task.PAPER_TITLING)
    return Conversation(doc.id, context, (turn,))


def _build_caption_writing(doc: Document, templates: TemplateSet) -> Conversation:
    captioned = [item for item in doc.figures + doc.tables if item.caption]
    if not captioned:
        raise MissingField(Task.CAPTION_WRITING.value, "figures")
    segments: list[Segment] = []
    turns: list[QAPair] = []
    question = templates.question(Task.CAPTION_WRITING)
    for item in captioned:
        segments.append(Segment.of_image(item.image, media_id=item.id))
        relative = _relative_text(doc, item.id)
        if relative:
            segments.append(Segment.of_text(relative))
        turns.append(QAPair(question, item.caption, Task.CAPTION_WRITING))
    context = InterleavedDoc(_merge_adjacent_text(segments))
    return Conversation(doc.id, context, tuple(turns))


def _build_experiment_writing(doc: Document, templates: TemplateSet) -> Conversation:
    section = _find_section(doc, EXPERIMENT_HEADINGS)
    if section is None:
        raise MissingField(Task.EXPERIMENT_WRITING.value, "experiments")
    answer = _section_text(section)
    if not answer:
        raise MissingField(Task.EXPERIMENT_WRITING.value, "experiments")
    kept = tuple(s for s in doc.sections if s is not section)
    context = interleave(doc, kept)
    turn = QAPair(templates.question(Task.EXPERIMENT_WRITING), answer, Task.EXPERIMENT_WRITING)
    return Conversation(doc.id, context, (turn,))


def _build_translation(doc: Document, templates: TemplateSet, translation: str | None) -> Conversation:
    if _find_section(doc, EXPERIMENT_HEADINGS) is None:
        raise MissingField(Task.TRANSLATION.value, "experiments")
    if not translation:
        raise MissingField(Task.TRANSLATION.value, "translation")
    turn = QAPair(templates.question(Task.TRANSLATION), translation, Task.TRANSLATION)
    return Conversation(doc.id, to_interleaved(doc), (turn,))


def build_structured_tasks(
    doc: Document,
    tasks: Iterable[Task],
    *,
    templates: TemplateSet = DEFAULT_TEMPLATES,
    translation: str | None = None,
    on_missing: str = "raise",
) -> list[Conversation]:
    """Build one conversation per satisfiable structured task, in task order.

    Answers are copied verbatim from the document.  The abstract-writing
    context excludes the abstract and the experiment-writing context excludes
    the experiments section, so targets never leak into their own contexts.
    ``translation`` supplies the externally produced answer for the
    translation task; the toolkit performs no machine translation itself.

    Raises:
        MissingField: a requested task's prerequisite is absent (suppressed
            per task when ``on_missing="skip"``).
    """
    if on_missing not in ("raise", "skip"):
        raise ValueError(f"on_missing must be 'raise' or 'skip', got {on_missing!r}")
    wanted = set(tasks)
    builders = {
        Task.ABSTRACT_WRITING: lambda: _build_abstract_writing(doc, templates),
        Task.PAPER_TITLING: lambda: _build_paper_titling(doc, templates),
        Task.CAPTION_WRITING: lambda: _build_caption_writing(doc, templates),
        Task.EXPERIMENT_WRITING: lambda: _build_experiment_writing(doc, templates),
        Task.TRANSLATION: lambda: _build_translation(doc, templates, translation),
    }
    conversations = []
    for task in STRUCTURED_TASKS:
        if task not in wanted:
            continue
        try:
            conversations.append(builders[task]())
        except MissingField:
            if on_missing == "raise":
                raise
    return conversations


def build_review_reply(
    doc: Document, *, templates: TemplateSet = DEFAULT_TEMPLATES
) -> list[Conversation]:
    """One review-writing conversation per thread, plus a reply-writing one
    for each thread that has a reply.

    Raises:
        NoReviews: the document has no review threads.
    """
    if not doc.reviews:
        raise NoReviews(f"document {doc.id!r} has no review threads")
    context = to_interleaved(doc)
    conversations = []
    for thread in doc.reviews:
        review_turn = QAPair(
            templates.question(Task.REVIEW_WRITING), thread.review, Task.REVIEW_WRITING
        )
        conversations.append(Conversation(doc.id, context, (review_turn,)))
        if thread.reply:
            reply_question = templates.question(Task.REPLY_WRITING).format(review=thread.review)
            reply_turn = QAPair(reply_question, thread.reply, Task.REPLY_WRITING)
            conversations.append(Conversation(doc.id, context, (reply_turn,)))
    return conversations


def attach_external_qa(
    doc: Document, qa: Sequence[tuple[str, str]]
) -> Conversation:
    """Attach externally generated QA pairs as one multi-turn conversation.

    Every turn is marked ``generated_by_model`` so downstream consumers can
    tell model-generated data from document-sourced data.

    Raises:
        EmptyQAList: no pairs were supplied.
    """
    if not qa:
        raise EmptyQAList(f"document {doc.id!r} received an empty QA list")
    turns = tuple(
        QAPair(question, answer, Task.EXTERNAL_GENERATED, generated_by_model=True)
        for question, answer in qa
    )
    return Conversation(doc.id, to_interleaved(doc), turns)


def build_ntp(doc: Document) -> Conversation:
    """Fallback for documents matching no task: a single plain-text record.

    The interleaved text content (captions included, images dropped) becomes
    the answer of one ntp turn; the conversation context stays empty so the
    text is not stored twice.

    Raises:
        MissingField: the document has no text content at all.
    """
    text = to_interleaved(doc).text()
    if not text:
        raise MissingField(Task.NTP.value, "text")
    return Conversation(doc.id, InterleavedDoc(()), (QAPair("", text, Task.NTP),))


def render_conversation(conv: Conversation) -> str:
    """The canonical training text for a conversation, byte-deterministic.

    The first turn states the paper context once; each later turn appends its
    bare question and answer.  Single-turn ntp conversations render as the
    plain text itself.
    """
    first = conv.turns[0]
    if first.task is Task.NTP and not conv.multi_turn:
        return first.answer
    paper = render_context(conv.context)
    parts = [
        f"{CONTEXT_PREFIX}{paper}{QUESTION_GLUE}{first.question}{ANSWER_GLUE}{first.answer}"
    ]
    for turn in conv.turns[1:]:
        parts.append(f"{turn.question}{ANSWER_GLUE}{turn.answer}")
    return TURN_JOIN.join(parts)


# --- conversation store codec ------------------------------------------------


def context_format(conv: Conversation) -> str:
    return "interleaved" if isinstance(conv.context, InterleavedDoc) else "multi_image"


def _image_ref_to_obj(ref: ImageRef) -> dict[str, Any]:
    return {"uri": ref.uri, "width": ref.width_px, "height": ref.height_px}


def conversation_to_record(conv: Conversation) -> dict[str, Any]:
    """The JSON-lines record shape for the conversation store."""
    if isinstance(conv.context, InterleavedDoc):
        context: list[Any] = []
        for seg in conv.context.segments:
            if seg.kind is SegmentKind.TEXT:
                context.append({"t": seg.text})
            else:
                obj = _image_ref_to_obj(seg.image)
                if seg.media_id is not None:
                    obj["media_id"] = seg.media_id
                context.append({"img": obj})
    else:
        context = [_image_ref_to_obj(page) for page in conv.context.pages]
    return {
        "doc_id": conv.doc_id,
        "context_format": context_format(conv),
        "context": context,
        "turns": [
            {
                "task": turn.task.value,
                "question": turn.question,
                "answer": turn.answer,
                "generated_by_model": turn.generated_by_model,
            }
            for turn in conv.turns
        ],
    }


def _obj_to_image_ref(obj: Mapping[str, Any]) -> ImageRef:
    return ImageRef(str(obj["uri"]), int(obj["width"]), int(obj["height"]))


def conversation_from_record(record: Mapping[str, Any]) -> Conversation:
    """Inverse of :func:`conversation_to_record`."""
    fmt = record["context_format"]
    if fmt == "interleaved":
        segments = []
        for item in record["context"]:
            if "t" in item:
                segments.append(Segment.of_text(item["t"]))
            else:
                obj = item["img"]
                segments.append(
                    Segment.of_image(_obj_to_image_ref(obj), media_id=obj.get("media_id"))
                )
        context: InterleavedDoc | MultiImageDoc = InterleavedDoc(tuple(segments))
    elif fmt == "multi_image":
        context = MultiImageDoc(tuple(_obj_to_image_ref(obj) for obj in record["context"]))
    else:
        raise ValueError(f"unknown context format {fmt!r}")
    turns = tuple(
        QAPair(
            question=turn["question"],
            answer=turn["answer"],
            task=Task(turn["task"]),
            generated_by_model=bool(turn.get("generated_by_model", False)),
        )
        for turn in record["turns"]
    )
    return Conversation(str(record["doc_id"]), context, turns)
