"""Command-line interface for the RSVQA-Aug pipeline."""

import sys
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence

import click
import typer
from typing_extensions import Annotated

from . import __author__, __version__
from .schema.config import MTConfig, SynthConfig, TrainConfig, TrainMode, TranslatorBackend
from .schema.corpus import DedupPolicy, Pivot, QuestionFilter, Split
from .util import (
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE,
    RsvqaAugError,
    describe_file,
    save_table,
    setup_logging,
)


class Profile(str, Enum):
    """Named training profiles."""
    DESK = "desk"
    FULL = "full"


class TableFormat(str, Enum):
    """Report table formats."""
    MARKDOWN = "markdown"
    CSV = "csv"


def _parse_pivots(value: str) -> List[Pivot]:
    codes = [code.strip() for code in value.split(",") if code.strip()]
    if not codes:
        raise typer.BadParameter("at least one pivot language is required", param_hint="--pivots")
    pivots = []
    for code in codes:
        try:
            pivot = Pivot(code)
        except ValueError:
            raise typer.BadParameter(f"unknown pivot '{code}', use zh, de or fr", param_hint="--pivots")
        if pivot == Pivot.NONE or pivot in pivots:
            raise typer.BadParameter(f"invalid or repeated pivot '{code}'", param_hint="--pivots")
        pivots.append(pivot)
    return pivots


def _report_filename(setting: str) -> str:
    return setting.replace("->", "_to_") + ".json"


VerboseOption = Annotated[bool, typer.Option("-v", "--verbose", help="Enable verbose logging")]


class RsvqaAugCLI:
    """RSVQA-Aug CLI manager."""

    def __init__(self):
        self.app = typer.Typer(
            name="rsvqa-aug",
            help="RSVQA-Aug - back-translation augmentation and contrastive training for remote sensing VQA",
            add_completion=False,
            no_args_is_help=True,
        )
        self.checkpoint_app = typer.Typer(help="Inspect trained checkpoints", no_args_is_help=True)
        self._setup_commands()

    def _setup_commands(self):
        """Setup all CLI commands."""
        self.app.command(name="augment")(self.augment)
        self.app.command(name="train")(self.train)
        self.app.command(name="evaluate")(self.evaluate)
        self.app.command(name="matrix")(self.matrix)
        self.app.command(name="report")(self.report)
        self.app.command(name="synth")(self.synth)
        self.app.command(name="export-config")(self.export_config)
        self.app.command(name="info")(self.info)
        self.checkpoint_app.command(name="inspect")(self.checkpoint_inspect)
        self.app.add_typer(self.checkpoint_app, name="checkpoint")

    def augment(
        self,
        input_path: Annotated[Path, typer.Option(
            "-i", "--input",
            exists=True, dir_okay=False,
            help="Corpus JSON to augment"
        )],
        output: Annotated[Path, typer.Option(
            "-o", "--output",
            dir_okay=False,
            help="Where to write the augmented corpus"
        )],
        pivots: Annotated[str, typer.Option(
            "--pivots",
            help="Comma-separated pivot languages, processed in order"
        )] = "zh,de,fr",
        translator: Annotated[TranslatorBackend, typer.Option(
            "--translator",
            help="Translation backend"
        )] = TranslatorBackend.MOCK,
        endpoint: Annotated[Optional[str], typer.Option(
            "--endpoint",
            help="Translation service base URL (default: MT_ENDPOINT or http://127.0.0.1:5000)"
        )] = None,
        cache: Annotated[Optional[Path], typer.Option(
            "--cache",
            dir_okay=False,
            help="JSONL translation cache file"
        )] = None,
        timeout: Annotated[float, typer.Option("--timeout", min=0.001, help="HTTP timeout in seconds")] = 10.0,
        retries: Annotated[int, typer.Option("--retries", min=1, help="HTTP attempts per request")] = 3,
        backoff: Annotated[float, typer.Option("--backoff", min=0.0, help="Initial retry delay in seconds")] = 0.5,
        concurrency: Annotated[int, typer.Option("--concurrency", min=1, help="Concurrent translation requests")] = 4,
        id_base: Annotated[Optional[int], typer.Option("--id-base", help="First id for new questions")] = None,
        drop_report: Annotated[Optional[Path], typer.Option(
            "--drop-report",
            dir_okay=False,
            help="Drop report JSON (default: <output>.drops.json)"
        )] = None,
        no_dedup_normalize: Annotated[bool, typer.Option(
            "--no-dedup-normalize",
            help="Compare round trips verbatim instead of normalized"
        )] = False,
        no_dedup_original: Annotated[bool, typer.Option(
            "--no-dedup-original",
            help="Keep round trips equal to the original question"
        )] = False,
        no_dedup_siblings: Annotated[bool, typer.Option(
            "--no-dedup-siblings",
            help="Keep round trips equal to another pivot's paraphrase"
        )] = False,
        verbose: VerboseOption = False,
    ) -> None:
        """Back-translate every original question through the pivot languages."""
        from .pipeline.augmentation import augment_corpus, drop_reports, write_drop_report
        from .pipeline.dataset import load_corpus, save_corpus
        from .pipeline.mt_clients import build_translator

        setup_logging(verbose)
        pivot_list = _parse_pivots(pivots)

        mt_config = MTConfig.from_env(timeout=timeout, retries=retries, backoff=backoff, concurrency=concurrency)
        if endpoint:
            mt_config = mt_config.model_copy(update={"endpoint": endpoint})
        policy = DedupPolicy(
            normalize=not no_dedup_normalize,
            drop_equal_to_original=not no_dedup_original,
            drop_equal_across_pivots=not no_dedup_siblings,
        )

        corpus = load_corpus(input_path)
        backend = build_translator(translator, mt_config, cache_path=cache)
        if translator == TranslatorBackend.HTTP:
            typer.echo(f"Translating via {mt_config.endpoint}", err=True)
        augmented = augment_corpus(
            corpus,
            pivot_list,
            backend,
            policy=policy,
            id_base=id_base,
            concurrency=mt_config.concurrency,
        )

        save_corpus(augmented, output)
        report_path = drop_report or output.with_suffix(".drops.json")
        reports = [r for r in drop_reports(augmented) if r.pivot in {p.value for p in pivot_list}]
        write_drop_report(reports, report_path)

        typer.echo(f"✓ Augmented corpus: {output} ({len(corpus.questions)} -> {len(augmented.questions)} questions)")
        for r in reports:
            typer.echo(f"  {r.pivot}: dropped {r.dropped}")
        typer.echo(f"✓ Drop report: {report_path}")

    def train(
        self,
        data: Annotated[Path, typer.Option(
            "-d", "--data",
            exists=True, dir_okay=False,
            help="Training corpus JSON (images resolved relative to it)"
        )],
        out: Annotated[Path, typer.Option(
            "-o", "--out",
            dir_okay=False,
            help="Checkpoint file to write"
        )],
        config: Annotated[Optional[Path], typer.Option(
            "-c", "--config",
            exists=True, dir_okay=False,
            help="key=value config file (default: desk profile)"
        )] = None,
        mode: Annotated[Optional[TrainMode], typer.Option(
            "-m", "--mode",
            help="Override the config's training mode"
        )] = None,
        epochs: Annotated[Optional[int], typer.Option("--epochs", min=1, help="Override the number of epochs")] = None,
        seed: Annotated[Optional[int], typer.Option("--seed", help="Override the seed")] = None,
        history: Annotated[Optional[Path], typer.Option(
            "--history",
            dir_okay=False,
            help="History CSV (default: <out>.history.csv)"
        )] = None,
        verbose: VerboseOption = False,
    ) -> None:
        """Train a baseline or contrastive model."""
        from .pipeline.dataset import ImageStore, load_corpus
        from .pipeline.training import load_config, train

        setup_logging(verbose)
        train_config = load_config(config) if config is not None else TrainConfig.desk()
        overrides = {k: v for k, v in {"mode": mode, "epochs": epochs, "seed": seed}.items() if v is not None}
        if overrides:
            train_config = TrainConfig(**{**train_config.model_dump(), **overrides})

        corpus = load_corpus(data)
        checkpoint, records = train(
            corpus,
            train_config,
            images=ImageStore.for_corpus_file(corpus, data),
            verbose=verbose,
        )
        checkpoint.save(out)
        history_path = records.to_csv(history or out.with_suffix(".history.csv"))

        typer.echo(
            f"✓ Trained {train_config.mode.value} model for {len(records)} epochs "
            f"(best val OA {checkpoint.info['val_oa']:.4f} at epoch {checkpoint.info['best_epoch']})"
        )
        typer.echo(f"✓ Checkpoint: {out} ({describe_file(out)['size']})")
        typer.echo(f"✓ History: {history_path}")

    def evaluate(
        self,
        checkpoint: Annotated[Path, typer.Option(
            "-k", "--checkpoint",
            exists=True, dir_okay=False,
            help="Trained checkpoint"
        )],
        data: Annotated[Path, typer.Option(
            "-d", "--data",
            exists=True, dir_okay=False,
            help="Corpus JSON to evaluate on"
        )],
        out: Annotated[Path, typer.Option(
            "-o", "--out",
            dir_okay=False,
            help="Report JSON to write"
        )],
        split: Annotated[Split, typer.Option("--split", help="Split to evaluate")] = Split.TEST,
        question_filter: Annotated[QuestionFilter, typer.Option(
            "--filter",
            help="Which questions of the split to score"
        )] = QuestionFilter.ALL,
        pivot: Annotated[Optional[Pivot], typer.Option("--pivot", help="Only questions of this provenance")] = None,
        setting: Annotated[str, typer.Option("--setting", help="Label stored in the report")] = "",
        predictions: Annotated[Optional[Path], typer.Option(
            "--predictions",
            dir_okay=False,
            help="Also write per-question predictions as CSV"
        )] = None,
        verbose: VerboseOption = False,
    ) -> None:
        """Score a checkpoint on one split of a corpus."""
        import pandas as pd

        from .pipeline.dataset import ImageStore, load_corpus
        from .pipeline.evaluation import evaluate_model, save_report, score
        from .pipeline.model import Checkpoint

        setup_logging(verbose)
        loaded = Checkpoint.load(checkpoint)
        corpus = load_corpus(data)
        preds = evaluate_model(
            loaded,
            corpus,
            split=split,
            question_filter=question_filter,
            pivot=pivot,
            images=ImageStore.for_corpus_file(corpus, data),
        )
        if not len(preds):
            raise typer.BadParameter("no questions match the split/filter/pivot selection")
        report = score(preds, setting=setting)
        save_report(report, out)

        if predictions is not None:
            df = pd.DataFrame(
                [
                    {
                        "question_id": p.question_id,
                        "type": p.type.value,
                        "predicted": p.predicted,
                        "gold": p.gold,
                        "correct": p.correct,
                    }
                    for p in preds.predictions
                ]
            )
            save_table(df, predictions, format="csv")

        typer.echo(f"✓ {len(preds)} questions: AA={report.AA:.4f} OA={report.OA:.4f}")
        if preds.out_of_pool:
            typer.echo(f"  {preds.out_of_pool} gold answers outside the answer pool", err=True)
        typer.echo(f"✓ Report: {out}")

    def matrix(
        self,
        original_checkpoint: Annotated[Path, typer.Option(
            "--original-checkpoint",
            exists=True, dir_okay=False,
            help="Checkpoint trained on the original corpus"
        )],
        augmented_checkpoint: Annotated[Path, typer.Option(
            "--augmented-checkpoint",
            exists=True, dir_okay=False,
            help="Checkpoint trained on the augmented corpus"
        )],
        original_data: Annotated[Path, typer.Option(
            "--original-data",
            exists=True, dir_okay=False,
            help="Original corpus JSON"
        )],
        augmented_data: Annotated[Path, typer.Option(
            "--augmented-data",
            exists=True, dir_okay=False,
            help="Augmented corpus JSON"
        )],
        out_dir: Annotated[Path, typer.Option(
            "-o", "--out-dir",
            file_okay=False,
            help="Directory for the report JSONs"
        )],
        split: Annotated[Split, typer.Option("--split", help="Split to evaluate")] = Split.TEST,
        pivots: Annotated[bool, typer.Option(
            "--pivots/--no-pivots",
            help="Also score the original-trained model per pivot language"
        )] = True,
        verbose: VerboseOption = False,
    ) -> None:
        """Run the original/augmented train-test setting matrix."""
        from .pipeline.dataset import ImageStore, load_corpus
        from .pipeline.evaluation import ORIGINAL, render_table, run_pivot_breakdown, run_setting_matrix, save_report
        from .pipeline.model import Checkpoint

        setup_logging(verbose)
        checkpoints = {"original": Checkpoint.load(original_checkpoint), "augmented": Checkpoint.load(augmented_checkpoint)}
        corpora = {"original": load_corpus(original_data), "augmented": load_corpus(augmented_data)}
        paths = {"original": original_data, "augmented": augmented_data}
        images = {label: ImageStore.for_corpus_file(corpora[label], paths[label]) for label in corpora}

        reports = run_setting_matrix(checkpoints, corpora, split=split, images=images)
        if pivots:
            breakdown = run_pivot_breakdown(
                checkpoints[ORIGINAL], corpora["augmented"], split=split, images=images["augmented"]
            )
            reports += breakdown[1:]

        for report in reports:
            save_report(report, out_dir / _report_filename(report.setting))
        typer.echo(render_table(reports).to_markdown(index=False))
        typer.echo(f"✓ {len(reports)} reports written to {out_dir}")

    def report(
        self,
        reports: Annotated[List[Path], typer.Argument(
            exists=True, dir_okay=False,
            help="Report JSON files, one per setting"
        )],
        out: Annotated[Optional[Path], typer.Option(
            "-o", "--out",
            dir_okay=False,
            help="Write the table to this file"
        )] = None,
        table_format: Annotated[TableFormat, typer.Option("-f", "--format", help="Table format")] = TableFormat.MARKDOWN,
        plots: Annotated[Optional[Path], typer.Option(
            "--plots",
            file_okay=False,
            help="Directory for one accuracy bar chart per setting"
        )] = None,
        verbose: VerboseOption = False,
    ) -> None:
        """Render setting reports into one accuracy table."""
        from .pipeline.evaluation import load_report, plot_report, render_table

        setup_logging(verbose)
        loaded = [load_report(path) for path in reports]
        table = render_table(loaded)
        if table_format == TableFormat.MARKDOWN:
            typer.echo(table.to_markdown(index=False))
        else:
            typer.echo(table.to_csv(index=False, lineterminator="\n"), nl=False)

        if out is not None:
            save_table(table, out, format=table_format.value)
        if plots is not None:
            for path, report in zip(reports, loaded):
                plot_report(report, plots / f"{path.stem}.png")

    def synth(
        self,
        out: Annotated[Path, typer.Option(
            "-o", "--out",
            file_okay=False,
            help="Output directory for images and corpus"
        )],
        images: Annotated[int, typer.Option("-n", "--images", min=10, help="Number of images")] = 200,
        seed: Annotated[int, typer.Option("-s", "--seed", help="Generator seed")] = 42,
        paraphrases: Annotated[bool, typer.Option(
            "--paraphrases/--no-paraphrases",
            help="Also write paraphrased.json with rule paraphrases (held-out rules on test)"
        )] = True,
        verbose: VerboseOption = False,
    ) -> None:
        """Generate the synthetic shape benchmark."""
        from .pipeline.dataset import save_corpus
        from .pipeline.synthbench import generate, rule_paraphrase

        setup_logging(verbose)
        result = generate(SynthConfig(n_images=images, seed=seed))
        corpus_path = result.save(out)
        typer.echo(f"✓ {len(result.corpus.images)} images, {len(result.corpus.questions)} questions: {corpus_path}")
        if result.reduced:
            typer.echo(f"  {result.reduced} shapes dropped during placement", err=True)
        if paraphrases:
            paraphrased_path = save_corpus(rule_paraphrase(result.corpus), out / "paraphrased.json")
            typer.echo(f"✓ Rule paraphrases: {paraphrased_path}")

    def checkpoint_inspect(
        self,
        path: Annotated[Path, typer.Argument(exists=True, dir_okay=False, help="Checkpoint file")],
    ) -> None:
        """Print every parameter key with its shape."""
        from .pipeline.model import Checkpoint

        checkpoint = Checkpoint.load(path)
        typer.echo(f"precision: {checkpoint.precision.value}, answers: {len(checkpoint.answers)}, "
                   f"tokens: {len(checkpoint.text_vocab)}, max_question_len: {checkpoint.max_question_len}")
        for key, shape in checkpoint.describe():
            typer.echo(f"{key}\t{'x'.join(str(n) for n in shape) or 'scalar'}")

    def export_config(
        self,
        output: Annotated[Path, typer.Option(
            "-o", "--output",
            dir_okay=False,
            help="Output file path"
        )] = Path("rsvqa-aug.conf"),
        profile: Annotated[Profile, typer.Option("-p", "--profile", help="Training profile")] = Profile.DESK,
        mode: Annotated[TrainMode, typer.Option("-m", "--mode", help="Training mode")] = TrainMode.CONTRASTIVE,
    ) -> None:
        """Export a training config file."""
        from .pipeline.training import dump_config

        factory = TrainConfig.full if profile == Profile.FULL else TrainConfig.desk
        dump_config(factory(mode=mode), output)
        typer.echo(f"Training configuration exported to: {output}")

    def info(self) -> None:
        """Display information about RSVQA-Aug."""

        typer.echo(f"""
RSVQA-Aug v{__version__}
{__author__}

Back-translation augmentation and contrastive training for remote sensing
visual question answering.

Commands:
  • synth          - Generate the synthetic shape benchmark
  • augment        - Back-translate questions through zh/de/fr
  • train          - Train a baseline or contrastive model
  • evaluate       - Score a checkpoint on one split
  • matrix         - Original/augmented setting matrix and per-pivot breakdown
  • report         - Render report JSONs as a Markdown/CSV table and charts
  • checkpoint     - Inspect checkpoint parameters
  • export-config  - Write a training config file

Usage Examples:
  rsvqa-aug synth -o bench -n 200 -s 42
  rsvqa-aug augment -i bench/corpus.json -o bench/augmented.json --pivots zh,de,fr
  rsvqa-aug export-config -o desk.conf
  rsvqa-aug train -d bench/augmented.json -c desk.conf -o contrastive.pt
  rsvqa-aug evaluate -k contrastive.pt -d bench/augmented.json -o report.json

Exit codes:
  0 ok, 1 usage or config error, 2 data error, 3 translation or training failure

Environment Variables:
  MT_ENDPOINT           - Translation service base URL
  MT_TOKEN              - Bearer token for the translation service
  RSVQA_AUG_VERBOSE     - Enable verbose logging
""")


# Create CLI instance
cli = RsvqaAugCLI()
app = cli.app


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit code."""
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        result = app(args=args, prog_name="rsvqa-aug", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        typer.echo("Aborted.", err=True)
        return EXIT_USAGE
    except RsvqaAugError as e:
        typer.echo(f"Error: {e}", err=True)
        return e.exit_code
    except Exception as e:
        typer.echo(f"Error: {type(e).__name__}: {e}", err=True)
        return EXIT_RUNTIME
    return result if isinstance(result, int) else EXIT_OK


def run() -> None:
    """Console script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
