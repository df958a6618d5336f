"""
Linha de comando: gen | train | eval | gradcheck | inspect | runs.

Toda execução grava um RunManifest (JSON) ao lado das saídas e uma linha no
registro sqlite. `--from-manifest` reexecuta o comando gravado.
"""
import argparse
import logging
import os
import sqlite3
import sys

import numpy as np
import pandas as pd

from database.checkpoint import load_checkpoint
from database.db_utils import (
    DEFAULT_DB, listar_execucoes, listar_metricas, registrar_execucao, registrar_metricas,
)
from modules.avaliacao import DEFAULT_METHODS, METHODS, EvalOptions, evaluate
from modules.gradcheck import TINY_CONFIG, TINY_TRAIN, check_model, tiny_instance
from modules.manifest import RunManifest, load_manifest, save_manifest
from modules.qan_model import QanConfig, QanModel, set_uniform_quality
from modules.relatorios import dump_qualidades, imprimir_relatorio, salvar_dump, salvar_relatorio
from modules.synth_data import GenSpec, generate, load, save, split_train_test
from modules.trainer import TrainConfig, train
from utils.calculadora import TPR_LABELS, TPR_TARGETS
from utils.exceptions import ConfigError, QanError
from utils.formatters import format_decimal
from utils.netcore import RngState

logger = logging.getLogger("qan")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser():
    parser = argparse.ArgumentParser(prog="qan", description="Quality Aware Network em escala de bancada")
    parser.add_argument("--verbose", action="store_true", help="log em nível DEBUG")
    parser.add_argument("--registry", default=DEFAULT_DB, help="banco sqlite do registro de execuções")
    parser.add_argument("--no-registry", action="store_true", help="não registra a execução")
    parser.add_argument("--from-manifest", metavar="MANIFESTO", help="reexecuta o comando de um manifesto")
    sub = parser.add_subparsers(dest="command")

    gen = sub.add_parser("gen", help="gera um dataset sintético")
    gen.add_argument("--identities", type=int, default=GenSpec.n_identities)
    gen.add_argument("--sets", type=int, default=GenSpec.sets_per_identity)
    gen.add_argument("--samples", type=int, default=GenSpec.samples_per_set)
    gen.add_argument("--d-in", type=int, default=GenSpec.d_in)
    gen.add_argument("--rho", type=float, default=GenSpec.rho)
    gen.add_argument("--beta-lo", type=float, default=GenSpec.beta_lo)
    gen.add_argument("--beta-hi", type=float, default=GenSpec.beta_hi)
    gen.add_argument("--noise", type=float, default=GenSpec.noise_sigma)
    gen.add_argument("--test-identities", type=int, default=GenSpec.n_test_identities,
                     help="identidades extras gravadas em <saida>_test.qanset")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("-o", "--output", required=True)

    tr = sub.add_parser("train", help="pré-treino e treino conjunto")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out-dir", required=True)
    tr.add_argument("--trunk-dims", type=int, nargs="+", default=list(QanConfig.trunk_dims))
    tr.add_argument("--split-index", type=int, nargs="+", default=[QanConfig.split_index],
                    help="vários valores geram um diretório split_<k> por valor")
    tr.add_argument("--d-embed", type=int, default=QanConfig.d_embed)
    tr.add_argument("--quality-hidden", type=int, default=QanConfig.quality_hidden)
    tr.add_argument("--feature-hidden", type=int, nargs="*", default=[])
    tr.add_argument("--n-classes", type=int, help="padrão: maior identidade de treino + 1")
    tr.add_argument("--margin", type=float, default=QanConfig.margin)
    tr.add_argument("--lambda-class", type=float, default=QanConfig.lambda_class)
    tr.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    tr.add_argument("--triplets", type=int, default=TrainConfig.triplets_per_epoch)
    tr.add_argument("--lr", type=float, default=TrainConfig.lr)
    tr.add_argument("--lr-decay", type=float, default=TrainConfig.lr_decay)
    tr.add_argument("--momentum", type=float, default=TrainConfig.momentum)
    tr.add_argument("--pretrain", type=int, default=TrainConfig.pretrain_epochs)
    tr.add_argument("--pretrain-lr", type=float, default=TrainConfig.pretrain_lr)
    tr.add_argument("--pretrain-momentum", type=float, default=TrainConfig.pretrain_momentum)
    tr.add_argument("--quality-lr-scale", type=float, default=TrainConfig.quality_lr_scale,
                    help="multiplicador do passo do ramo de qualidade")
    tr.add_argument("--weight-decay", type=float, default=TrainConfig.weight_decay,
                    help="encolhimento por época dos pesos fora do ramo de qualidade")
    tr.add_argument("--freeze-features", action="store_true",
                    help="congela tronco e ramo de features após o pré-treino")
    tr.add_argument("--random-quality-start", action="store_true",
                    help="mantém a inicialização sorteada do ramo de qualidade")
    tr.add_argument("--no-hinge", action="store_true", help="diagnóstico: perda tripla sem hinge")
    tr.add_argument("--uniform-quality-init", action="store_true",
                    help="zera a última camada de qualidade na inicialização (mu_raw = 0.5)")
    tr.add_argument("--seed", type=int, required=True)

    ev = sub.add_parser("eval", help="CMC, ROC e concordância de qualidade")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--methods", nargs="+", default=list(DEFAULT_METHODS), choices=sorted(METHODS))
    ev.add_argument("--distance", default="pooled-l2", choices=["pooled-l2", "pooled-cos"],
                    help="distância entre vetores agregados")
    ev.add_argument("--seed", type=int, default=0, help="sorteio dos pares negativos")
    ev.add_argument("--out-dir", required=True)
    ev.add_argument("--pdf", help="grava também um relatório PDF")

    gc = sub.add_parser("gradcheck", help="diferenças finitas contra o backward analítico")
    gc.add_argument("--seeds", type=int, default=100)
    gc.add_argument("--seed-start", type=int, default=0)
    gc.add_argument("--h", type=float, default=1e-5)
    gc.add_argument("-o", "--output", default="gradcheck.csv")

    ins = sub.add_parser("inspect", help="dump por amostra das qualidades aprendidas")
    ins.add_argument("--checkpoint", required=True)
    ins.add_argument("--data", required=True)
    ins.add_argument("-o", "--output", required=True)

    runs = sub.add_parser("runs", help="lista as execuções registradas")
    runs.add_argument("--limit", type=int, default=20)
    runs.add_argument("--id", type=int, dest="execucao_id", help="mostra as métricas de uma execução")
    return parser


def _build(factory, **kwargs):
    """Constrói um dataclass de configuração; erros viram ConfigError"""
    try:
        return factory(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def _test_path(output):
    stem, ext = os.path.splitext(output)
    return f"{stem}_test{ext or '.qanset'}"


def cmd_gen(args, manifest):
    spec = _build(
        GenSpec, n_identities=args.identities, sets_per_identity=args.sets,
        samples_per_set=args.samples, d_in=args.d_in, rho=args.rho, beta_lo=args.beta_lo,
        beta_hi=args.beta_hi, noise_sigma=args.noise, seed=args.seed,
        n_test_identities=args.test_identities,
    )
    manifest.seed = spec.seed
    manifest.add_config("gen", spec)
    dataset = generate(spec)
    if spec.n_test_identities:
        dataset, test = split_train_test(dataset, spec.n_identities)
        save(test, _test_path(args.output))
        manifest.add_output(_test_path(args.output))
    save(dataset, args.output)
    manifest.add_output(args.output)
    return EXIT_OK


def _train_one(args, dataset, split_index, out_dir, manifest, sufixo=""):
    n_classes = args.n_classes if args.n_classes is not None else dataset.identities[-1] + 1
    config = _build(
        QanConfig, d_in=dataset.d_in, trunk_dims=tuple(args.trunk_dims), split_index=split_index,
        d_embed=args.d_embed, quality_hidden=args.quality_hidden,
        feature_hidden=tuple(args.feature_hidden), n_classes=n_classes,
        margin=args.margin, lambda_class=args.lambda_class,
    )
    cfg = _build(
        TrainConfig, epochs=args.epochs, triplets_per_epoch=args.triplets, lr=args.lr,
        lr_decay=args.lr_decay, momentum=args.momentum, pretrain_epochs=args.pretrain,
        pretrain_lr=args.pretrain_lr, pretrain_momentum=args.pretrain_momentum,
        quality_lr_scale=args.quality_lr_scale, weight_decay=args.weight_decay,
        uniform_quality_start=not args.random_quality_start, freeze_features=args.freeze_features,
        seed=args.seed, hinge=not args.no_hinge,
    )
    manifest.add_config(f"qan{sufixo}", config)
    manifest.add_config(f"train{sufixo}", cfg)
    model = QanModel(config, RngState(args.seed))
    if args.uniform_quality_init:
        set_uniform_quality(model)
    logger.info("Treinando split_index=%d em %s", split_index, out_dir)
    _, log = train(model, dataset, cfg, out_dir=out_dir)
    for name in sorted(os.listdir(out_dir)):
        if name.endswith((".qanmodel", ".csv")):
            manifest.add_output(os.path.join(out_dir, name))
    return log


def cmd_train(args, manifest):
    manifest.seed = args.seed
    dataset = load(args.data)
    if len(args.split_index) == 1:
        _train_one(args, dataset, args.split_index[0], args.out_dir, manifest)
        return EXIT_OK
    if len(set(args.split_index)) != len(args.split_index):
        raise ConfigError("valores repetidos em --split-index")
    for k in args.split_index:
        _train_one(args, dataset, k, os.path.join(args.out_dir, f"split_{k}"), manifest, sufixo=f"_split_{k}")
    return EXIT_OK


def _metricas(report):
    for method, table in report.cmc.items():
        for k, rate in table.ranks:
            yield method, f"cmc@{k}", rate
    for method, roc in report.roc.items():
        yield method, "auc", roc.auc
        yield method, "accuracy", roc.accuracy
        for target in TPR_TARGETS:
            yield method, f"tpr@{TPR_LABELS[target]}", roc.tpr_at[target]
    if report.agreement is not None:
        yield "quality", "spearman", report.agreement.spearman_rho
        yield "quality", "pair_agreement", report.agreement.pairwise_agreement


def cmd_eval(args, manifest):
    options = _build(EvalOptions, methods=tuple(args.methods), seed=args.seed, pooled_distance=args.distance)
    manifest.seed = options.seed
    manifest.add_config("eval", options)
    model = load_checkpoint(args.checkpoint)
    dataset = load(args.data)
    manifest.add_config("qan", model.config)
    report = evaluate(model, dataset, options)
    for path in salvar_relatorio(report, args.out_dir):
        manifest.add_output(path)
    imprimir_relatorio(report)
    if args.pdf:
        from modules.pdf_generator import generate_pdf_report

        dados = {"Checkpoint": args.checkpoint, "Dataset": args.data, "Seed": options.seed}
        manifest.add_output(generate_pdf_report(args.pdf, report, dados))
    manifest.metrics = list(_metricas(report))
    return EXIT_OK


def cmd_gradcheck(args, manifest):
    if args.seeds < 1:
        raise ConfigError("--seeds deve ser maior ou igual a 1")
    manifest.seed = args.seed_start
    manifest.add_config("qan", TINY_CONFIG)
    manifest.add_config("train", TINY_TRAIN)
    rows = []
    falhas = 0
    for seed in range(args.seed_start, args.seed_start + args.seeds):
        model, triplet = tiny_instance(seed)
        report = check_model(model, triplet, TINY_TRAIN, h=args.h)
        falhas += not report.passed
        for block in report.blocks:
            rows.append({
                "seed": seed, "block": block.name, "size": block.size, "max_rel": block.max_rel,
                "median_rel": block.median_rel, "max_abs": block.max_abs,
                "worst_index": block.worst_index, "passed": block.passed, "vacuous": report.vacuous,
            })
    df = pd.DataFrame(rows)
    df.to_csv(args.output, index=False, float_format="%.6e")
    manifest.add_output(args.output)
    resumo = df.groupby("block", sort=False).agg(
        max_rel=("max_rel", "max"), median_rel=("median_rel", "max"), passed=("passed", "all"),
    )
    print(resumo.to_string(formatters={"max_rel": "{:.3e}".format, "median_rel": "{:.3e}".format}))
    print(f"{args.seeds - falhas}/{args.seeds} instâncias aprovadas")
    if falhas:
        logger.error("Checagem de gradiente falhou em %d de %d instâncias", falhas, args.seeds)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_inspect(args, manifest):
    model = load_checkpoint(args.checkpoint)
    dataset = load(args.data)
    manifest.add_config("qan", model.config)
    df = dump_qualidades(model, dataset)
    salvar_dump(df, args.output)
    manifest.add_output(args.output)
    if len(df):
        logger.info(
            "mu_raw de %s a %s (mediana %s)", format_decimal(df["mu_raw"].iloc[0]),
            format_decimal(df["mu_raw"].iloc[-1]), format_decimal(float(np.median(df["mu_raw"]))),
        )
    return EXIT_OK


def cmd_runs(args):
    if args.execucao_id is not None:
        return cmd_metricas(args)
    df = listar_execucoes(args.registry, args.limit)
    if df.empty:
        print("Nenhuma execução registrada.")
    else:
        print(df.to_string(index=False))
    return EXIT_OK


def cmd_metricas(args):
    df = listar_metricas(args.registry, args.execucao_id)
    if df.empty:
        print(f"Nenhuma métrica registrada para a execução {args.execucao_id}.")
    else:
        print(df.to_string(index=False))
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "inspect": cmd_inspect,
}


def manifest_path(args):
    if args.command in ("train", "eval"):
        return os.path.join(args.out_dir, "manifest.json")
    return f"{args.output}.manifest.json"


def _parse(parser, argv):
    try:
        return parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = _parse(parser, argv)
    if isinstance(args, int):
        return args

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT, force=True)

    if args.from_manifest:
        try:
            origem = load_manifest(args.from_manifest)
        except (QanError, OSError) as e:
            logger.error("%s", e)
            return EXIT_FAILURE
        logger.info("Reexecutando '%s' a partir de %s", origem.command, args.from_manifest)
        argv = origem.argv
        rerun = _parse(parser, argv)
        if isinstance(rerun, int):
            return rerun
        rerun.verbose = args.verbose
        rerun.registry = args.registry
        rerun.no_registry = args.no_registry
        args = rerun

    if args.command is None:
        parser.print_usage(sys.stderr)
        logger.error("informe um comando ou --from-manifest")
        return EXIT_USAGE
    if args.command == "runs":
        return cmd_runs(args)

    manifest = RunManifest(command=args.command, argv=argv)
    mensagem = None
    try:
        code = COMMANDS[args.command](args, manifest)
    except ConfigError as e:
        logger.error("Configuração inválida: %s", e)
        code = EXIT_USAGE
        mensagem = str(e)
    except (QanError, OSError) as e:
        logger.error("%s", e)
        code = EXIT_FAILURE
        mensagem = str(e)

    manifest.finish("ok" if code == EXIT_OK else "erro")
    caminho = None
    if code != EXIT_USAGE:
        try:
            caminho = save_manifest(manifest, manifest_path(args))
        except OSError as e:
            logger.error("Falha ao gravar o manifesto: %s", e)
            code = EXIT_FAILURE
    if not args.no_registry:
        try:
            execucao_id = registrar_execucao(args.registry, manifest, caminho, mensagem)
            if manifest.metrics:
                registrar_metricas(args.registry, execucao_id, manifest.metrics)
        except (sqlite3.Error, OSError) as e:
            logger.warning("Execução não registrada em %s: %s", args.registry, e)
    return code


if __name__ == "__main__":
    sys.exit(main())
