"""Synthetic shape benchmark: rendered images, templated questions and rule paraphrases."""

import json
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, Field

from ..schema.config import SynthConfig
from ..schema.corpus import (
    ImageRecord,
    Pivot,
    QuestionRecord,
    QuestionType,
    Split,
    VQACorpus,
)
from ..util import CorpusError, write_json
from .dataset import ImageStore, corpus_to_dict, paraphrase_groups, parse_corpus, save_corpus

logger = logging.getLogger(__name__)

PARAPHRASE_RULES_FILE = Path(__file__).resolve().parent.parent / "data" / "paraphrase_rules.json"
CORPUS_FILENAME = "corpus.json"
INVENTORY_FILENAME = "inventory.json"

BACKGROUND = (70, 110, 60)
PALETTE = {"red": (220, 50, 50), "blue": (50, 80, 220)}
ROUND_ROBIN_PIVOTS = (Pivot.ZH, Pivot.DE, Pivot.FR)

PRESENCE_TEMPLATE = "is there a {color} {shape}?"
COUNT_TEMPLATE = "how many {color} {shape}s are there?"
COMPARISON_TEMPLATE = "are there more {color1} {shape1}s than {color2} {shape2}s?"
RURAL_URBAN_TEMPLATE = "is it a rural or an urban area?"

_PRESENCE = re.compile(r"^is there an? (\w+) (\w+)\?$")
_COUNT = re.compile(r"^how many (\w+) (\w+)s are there\?$")
_COMPARISON = re.compile(r"^are there more (\w+) (\w+)s than (\w+) (\w+)s\?$")


class PlacedShape(BaseModel):
    """One rendered shape; (x, y) is the top-left corner of its bounding box."""

    shape: str
    color: str
    x: int
    y: int
    size: int


class ImageInventory(BaseModel):
    """Ground-truth content of one synthetic image."""

    img_id: int
    file: str
    split: Split
    shapes: List[PlacedShape] = Field(default_factory=list)
    reduced: int = Field(default=0, description="Shapes dropped after failed placement")

    def count(self, color: str, shape: str) -> int:
        return sum(1 for s in self.shapes if s.color == color and s.shape == shape)

    @property
    def total(self) -> int:
        return len(self.shapes)


@dataclass
class SynthResult:
    """Generated corpus plus the inventory and pixel arrays behind it."""

    corpus: VQACorpus
    inventory: List[ImageInventory]
    arrays: Dict[int, np.ndarray] = field(default_factory=dict)
    config: SynthConfig = field(default_factory=SynthConfig)

    @property
    def reduced(self) -> int:
        return sum(item.reduced for item in self.inventory)

    def image_store(self, corpus: Optional[VQACorpus] = None) -> ImageStore:
        return ImageStore(corpus or self.corpus, arrays=self.arrays)

    def save(self, out_dir: Union[str, Path]) -> Path:
        """Write PNGs, ``corpus.json`` and ``inventory.json``; returns the corpus path."""
        out_dir = Path(out_dir)
        for item in self.inventory:
            path = out_dir / item.file
            path.parent.mkdir(parents=True, exist_ok=True)
            image = Image.fromarray(np.round(self.arrays[item.img_id] * 255).astype(np.uint8), "RGB")
            image.save(path, format="PNG")
        write_json([item.model_dump(mode="json") for item in self.inventory], out_dir / INVENTORY_FILENAME)
        return save_corpus(self.corpus, out_dir / CORPUS_FILENAME)


def declared_answers(config: SynthConfig) -> List[str]:
    """Every answer the generator can emit."""
    counts = [str(n) for n in range(config.max_per_class + 1)]
    return sorted(["yes", "no", "rural", "urban"] + counts)


def _overlaps(a: PlacedShape, x: int, y: int, size: int) -> bool:
    # one pixel gap between bounding boxes
    return not (x > a.x + a.size or a.x > x + size or y > a.y + a.size or a.y > y + size)


def _place_shapes(
    rng: np.random.Generator,
    wanted: List[Tuple[str, str]],
    config: SynthConfig,
) -> Tuple[List[PlacedShape], int]:
    placed: List[PlacedShape] = []
    reduced = 0
    limit = config.image_size - config.shape_size
    for color, shape in wanted:
        for _ in range(config.placement_retries):
            x, y = (int(v) for v in rng.integers(0, limit + 1, size=2))
            if not any(_overlaps(p, x, y, config.shape_size) for p in placed):
                placed.append(PlacedShape(shape=shape, color=color, x=x, y=y, size=config.shape_size))
                break
        else:
            reduced += 1
    return placed, reduced


def render(shapes: List[PlacedShape], image_size: int) -> np.ndarray:
    """Draw shapes onto the background; returns an H x W x 3 float array in [0, 1]."""
    image = Image.new("RGB", (image_size, image_size), BACKGROUND)
    draw = ImageDraw.Draw(image)
    for s in shapes:
        box = [s.x, s.y, s.x + s.size - 1, s.y + s.size - 1]
        if s.shape == "circle":
            draw.ellipse(box, fill=PALETTE[s.color])
        else:
            draw.rectangle(box, fill=PALETTE[s.color])
    return np.asarray(image, dtype=np.float32) / 255.0


def _assign_splits(n_images: int, rng: np.random.Generator, fractions) -> List[Split]:
    n_train = int(round(n_images * fractions[0]))
    n_val = int(round(n_images * fractions[1]))
    order = rng.permutation(n_images)
    splits = [Split.TEST] * n_images
    for rank, index in enumerate(order):
        if rank < n_train:
            splits[index] = Split.TRAIN
        elif rank < n_train + n_val:
            splits[index] = Split.VAL
    return splits


def _questions_for(
    item: ImageInventory,
    classes: List[Tuple[str, str]],
    rng: np.random.Generator,
    config: SynthConfig,
    next_id: int,
) -> List[QuestionRecord]:
    color, shape = classes[int(rng.integers(len(classes)))]
    count_color, count_shape = classes[int(rng.integers(len(classes)))]
    first, second = rng.choice(len(classes), size=2, replace=False)
    (c1, s1), (c2, s2) = classes[int(first)], classes[int(second)]

    def record(offset: int, qtype: QuestionType, text: str, answer: str) -> QuestionRecord:
        return QuestionRecord(id=next_id + offset, img_id=item.img_id, type=qtype, text=text, answer=answer)

    return [
        record(
            0,
            QuestionType.PRESENCE,
            PRESENCE_TEMPLATE.format(color=color, shape=shape),
            "yes" if item.count(color, shape) > 0 else "no",
        ),
        record(
            1,
            QuestionType.COUNT,
            COUNT_TEMPLATE.format(color=count_color, shape=count_shape),
            str(item.count(count_color, count_shape)),
        ),
        record(
            2,
            QuestionType.COMPARISON,
            COMPARISON_TEMPLATE.format(color1=c1, shape1=s1, color2=c2, shape2=s2),
            "yes" if item.count(c1, s1) > item.count(c2, s2) else "no",
        ),
        record(
            3,
            QuestionType.RURAL_URBAN,
            RURAL_URBAN_TEMPLATE,
            "urban" if item.total >= config.urban_threshold else "rural",
        ),
    ]


def generate(config: Optional[SynthConfig] = None) -> SynthResult:
    """
    Render ``n_images`` shape images and ask one question of each type per image.

    Answers come from the placed-shape inventory. Shapes that cannot be
    placed without overlap after ``placement_retries`` attempts are dropped
    and counted in the inventory. Everything is a function of the seed.
    """
    config = config or SynthConfig()
    rng = np.random.default_rng(config.seed)
    classes = list(product(config.colors, config.shapes))
    splits = _assign_splits(config.n_images, rng, config.split_fractions)

    images: List[ImageRecord] = []
    questions: List[QuestionRecord] = []
    inventory: List[ImageInventory] = []
    arrays: Dict[int, np.ndarray] = {}
    for img_id in range(config.n_images):
        wanted = [
            (color, shape)
            for color, shape in classes
            for _ in range(int(rng.integers(0, config.max_per_class + 1)))
        ]
        order = rng.permutation(len(wanted))
        placed, reduced = _place_shapes(rng, [wanted[i] for i in order], config)
        if reduced:
            logger.warning(f"Image {img_id}: dropped {reduced} of {len(wanted)} shapes that did not fit")

        item = ImageInventory(
            img_id=img_id,
            file=f"images/{img_id:04d}.png",
            split=splits[img_id],
            shapes=placed,
            reduced=reduced,
        )
        inventory.append(item)
        arrays[img_id] = render(placed, config.image_size)
        images.append(ImageRecord(id=img_id, file=item.file, split=item.split))
        questions.extend(_questions_for(item, classes, rng, config, next_id=len(questions)))

    corpus = VQACorpus(
        metadata={
            "source": "synthbench",
            "seed": str(config.seed),
            "n_images": str(config.n_images),
        },
        images=tuple(images),
        questions=tuple(questions),
    )
    logger.info(
        f"Generated {len(images)} images and {len(questions)} questions "
        f"({sum(i.reduced for i in inventory)} shapes dropped during placement)"
    )
    return SynthResult(corpus=corpus, inventory=inventory, arrays=arrays, config=config)


def recount(item: ImageInventory, text: str, urban_threshold: int = 8) -> str:
    """
    Answer an original template question by counting the inventory's shapes.

    Raises:
        ValueError: If the text does not match any question template
    """
    if text == RURAL_URBAN_TEMPLATE:
        return "urban" if len(item.shapes) >= urban_threshold else "rural"

    def tally(color: str, shape: str) -> int:
        n = 0
        for s in item.shapes:
            if s.color == color and s.shape == shape:
                n += 1
        return n

    match = _PRESENCE.match(text)
    if match:
        return "yes" if tally(*match.groups()) > 0 else "no"
    match = _COUNT.match(text)
    if match:
        return str(tally(*match.groups()))
    match = _COMPARISON.match(text)
    if match:
        c1, s1, c2, s2 = match.groups()
        return "yes" if tally(c1, s1) > tally(c2, s2) else "no"
    raise ValueError(f"Not a synthetic question template: {text!r}")


def load_inventory(path: Union[str, Path]) -> List[ImageInventory]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ImageInventory.model_validate(item) for item in raw]


# ---------------------------------------------------------------------------
# Rule paraphrases
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def load_paraphrase_rules(path: Optional[str] = None) -> Dict[str, Dict[str, Tuple[re.Pattern, Tuple[str, ...]]]]:
    """``{rule_set: {question_type: (pattern, rewrites)}}`` from the shipped rule file."""
    raw = json.loads(Path(path or PARAPHRASE_RULES_FILE).read_text(encoding="utf-8"))
    rules = {}
    for rule_set, by_type in raw.items():
        rules[rule_set] = {
            qtype: (re.compile(entry["pattern"]), tuple(entry["rewrites"]))
            for qtype, entry in by_type.items()
        }
    return rules


def paraphrase_text(text: str, qtype: Union[QuestionType, str], rule_set: str = "train") -> List[str]:
    """Rewrites of one question; empty when no rule matches."""
    pattern, rewrites = load_paraphrase_rules()[rule_set][QuestionType(qtype).value]
    match = pattern.match(text)
    if not match:
        return []
    return [match.expand(rewrite) for rewrite in rewrites]


def rule_paraphrase(corpus: VQACorpus, heldout_split: Split = Split.TEST) -> VQACorpus:
    """
    Attach rule-based paraphrases to every original question.

    Originals on ``heldout_split`` images use the held-out rule set, all
    others the train set. Pivot labels cycle zh, de, fr across the output.

    Raises:
        CorpusError: If an original question matches no rule
    """
    splits = corpus.image_splits()
    next_id = max((q.id for q in corpus.questions), default=-1) + 1
    added: List[QuestionRecord] = []
    for group in paraphrase_groups(corpus):
        original = group.original
        rule_set = "heldout" if splits[original.img_id] == heldout_split else "train"
        rewrites = paraphrase_text(original.text, original.type, rule_set)
        if not rewrites:
            raise CorpusError(f"Question {original.id} matches no paraphrase rule: {original.text!r}")
        for text in rewrites:
            added.append(
                QuestionRecord(
                    id=next_id,
                    img_id=original.img_id,
                    type=original.type,
                    text=text,
                    answer=original.answer,
                    origin_id=original.id,
                    pivot=ROUND_ROBIN_PIVOTS[len(added) % len(ROUND_ROBIN_PIVOTS)],
                )
            )
            next_id += 1

    data = corpus_to_dict(corpus)
    data["metadata"] = {**corpus.metadata, "paraphrases": "rules"}
    data["questions"].extend(q.model_dump(mode="json") for q in added)
    logger.info(f"Attached {len(added)} rule paraphrases to {len(corpus.originals())} originals")
    return parse_corpus(data, source="rule-paraphrased corpus")
