import json
import logging

import numpy as np
import pandas as pd
import pytest

from database.checkpoint import load_checkpoint
from database.db_utils import listar_execucoes, listar_metricas
from main import main
from modules.qan_model import QanModel
from utils.netcore import RngState

SMALL_MODEL_FLAGS = ["--trunk-dims", "8", "6", "--split-index", "1", "--d-embed", "4", "--quality-hidden", "3"]


@pytest.fixture(autouse=True)
def restaura_logging():
    root = logging.getLogger()
    handlers = list(root.handlers)
    level = root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def _gen(path, *extra, seed=1):
    code = main(["--no-registry", "gen", "--identities", "4", "--sets", "2", "--samples", "3",
                 "--d-in", "6", "--seed", str(seed), "-o", str(path), *extra])
    assert code == 0
    return path


def _train(data, out_dir, *extra):
    return main(["--no-registry", "train", "--data", str(data), "--out-dir", str(out_dir), *SMALL_MODEL_FLAGS,
                 "--seed", "3", *extra])


@pytest.fixture
def dataset_path(tmp_path):
    return _gen(tmp_path / "d.qanset")


@pytest.fixture
def checkpoint_uniforme(tmp_path, dataset_path):
    out = tmp_path / "uniforme"
    assert _train(dataset_path, out, "--epochs", "0", "--pretrain", "1", "--uniform-quality-init") == 0
    return out / "ckpt_0.qanmodel"


def test_gen_contagem_de_linhas(tmp_path):
    path = tmp_path / "d.qanset"
    assert main(["--no-registry", "gen", "--identities", "10", "--sets", "2", "--samples", "8",
                 "--seed", "1", "-o", str(path)]) == 0
    assert len(path.read_text(encoding="utf-8").splitlines()) == 161
    assert (tmp_path / "d.qanset.manifest.json").exists()


def test_gen_rho_zero(tmp_path):
    path = _gen(tmp_path / "d.qanset", "--rho", "0")
    lines = path.read_text(encoding="utf-8").splitlines()[1:]
    assert all(float(line.split()[2]) == 1.0 for line in lines)


def test_gen_byte_a_byte(tmp_path):
    a = _gen(tmp_path / "a.qanset", seed=5)
    b = _gen(tmp_path / "b.qanset", seed=5)
    assert a.read_bytes() == b.read_bytes()


def test_gen_identidades_de_teste(tmp_path):
    _gen(tmp_path / "d.qanset", "--test-identities", "2")
    test_lines = (tmp_path / "d_test.qanset").read_text(encoding="utf-8").splitlines()[1:]
    assert {int(line.split()[0]) for line in test_lines} == {4, 5}


@pytest.mark.parametrize("extra", [
    ["--rho", "1.5"],
    ["--beta-lo", "0.9", "--beta-hi", "0.1"],
    ["--identities", "0"],
])
def test_gen_configuracao_invalida(tmp_path, extra):
    code = main(["--no-registry", "gen", "--seed", "1", "-o", str(tmp_path / "d.qanset"), *extra])
    assert code == 2
    assert not (tmp_path / "d.qanset").exists()


def test_argumentos_invalidos(tmp_path):
    assert main(["--no-registry", "gen", "-o", str(tmp_path / "d.qanset")]) == 2
    assert main(["--no-registry", "gen", "--seed", "x", "-o", str(tmp_path / "d.qanset")]) == 2
    assert main(["--no-registry"]) == 2


def test_reexecucao_a_partir_do_manifesto(tmp_path):
    path = _gen(tmp_path / "d.qanset", seed=9)
    original = path.read_bytes()
    manifest = tmp_path / "d.qanset.manifest.json"
    data = json.loads(manifest.read_text(encoding="utf-8"))
    assert data["command"] == "gen"
    assert data["seed"] == 9
    assert data["configs"]["gen"]["n_identities"] == 4
    path.unlink()
    assert main(["--no-registry", "--from-manifest", str(manifest)]) == 0
    assert path.read_bytes() == original


def test_manifesto_inexistente(tmp_path):
    assert main(["--no-registry", "--from-manifest", str(tmp_path / "nada.json")]) == 1


def test_train_sem_epocas_grava_inicializacao(tmp_path, dataset_path):
    out = tmp_path / "run"
    assert _train(dataset_path, out, "--epochs", "0", "--pretrain", "0") == 0
    loaded = load_checkpoint(out / "ckpt_0.qanmodel")
    expected = QanModel(loaded.config, RngState(3))
    assert loaded.config.n_classes == 4
    for name, value in expected.params.params.items():
        assert np.array_equal(loaded.params.params[name], value)
    assert (out / "manifest.json").exists()


def test_train_varredura_de_split(tmp_path, dataset_path):
    out = tmp_path / "sweep"
    assert _train(dataset_path, out, "--epochs", "1", "--triplets", "3", "--pretrain", "0",
                  "--split-index", "1", "2") == 0
    for k in (1, 2):
        model = load_checkpoint(out / f"split_{k}" / "ckpt_1.qanmodel")
        assert model.config.split_index == k
    configs = json.loads((out / "manifest.json").read_text(encoding="utf-8"))["configs"]
    assert {"qan_split_1", "qan_split_2", "train_split_1", "train_split_2"} <= set(configs)


def test_train_split_fora_do_tronco(tmp_path, dataset_path):
    assert _train(dataset_path, tmp_path / "run", "--split-index", "5") == 2


def test_train_dados_inexistentes(tmp_path):
    assert _train(tmp_path / "nada.qanset", tmp_path / "run") == 1


def test_eval_um_metodo(tmp_path, dataset_path, checkpoint_uniforme):
    out = tmp_path / "eval"
    assert main(["--no-registry", "eval", "--checkpoint", str(checkpoint_uniforme), "--data", str(dataset_path),
                 "--methods", "avepool", "--out-dir", str(out)]) == 0
    cmc = pd.read_csv(out / "eval_cmc.csv")
    assert list(cmc["method"]) == ["avepool"]
    roc = pd.read_csv(out / "eval_roc.csv")
    assert len(roc) == 1
    assert list(roc.columns) == ["method", "auc", "accuracy", "tpr@1e-3", "tpr@1e-2", "tpr@1e-1"]


def test_eval_qualidade_constante_iguala_qan_e_avepool(tmp_path, dataset_path, checkpoint_uniforme):
    out = tmp_path / "eval"
    assert main(["--no-registry", "eval", "--checkpoint", str(checkpoint_uniforme), "--data", str(dataset_path),
                 "--methods", "qan", "avepool", "--out-dir", str(out)]) == 0
    cmc = pd.read_csv(out / "eval_cmc.csv").set_index("method")
    roc = pd.read_csv(out / "eval_roc.csv").set_index("method")
    pd.testing.assert_series_equal(cmc.loc["qan"], cmc.loc["avepool"], check_names=False)
    assert roc.loc["qan", "auc"] == roc.loc["avepool", "auc"]


def test_eval_d_in_incompativel(tmp_path, checkpoint_uniforme):
    other = tmp_path / "d5.qanset"
    main(["--no-registry", "gen", "--identities", "4", "--d-in", "5", "--seed", "1", "-o", str(other)])
    assert main(["--no-registry", "eval", "--checkpoint", str(checkpoint_uniforme), "--data", str(other),
                 "--out-dir", str(tmp_path / "eval")]) == 1


def test_eval_metodo_desconhecido(tmp_path, dataset_path, checkpoint_uniforme):
    assert main(["--no-registry", "eval", "--checkpoint", str(checkpoint_uniforme), "--data", str(dataset_path),
                 "--methods", "median", "--out-dir", str(tmp_path / "eval")]) == 2


def test_eval_relatorio_pdf(tmp_path, dataset_path, checkpoint_uniforme):
    pdf = tmp_path / "rel.pdf"
    assert main(["--no-registry", "eval", "--checkpoint", str(checkpoint_uniforme), "--data", str(dataset_path),
                 "--out-dir", str(tmp_path / "eval"), "--pdf", str(pdf)]) == 0
    assert pdf.read_bytes().startswith(b"%PDF")


def test_inspect_qualidade_constante(tmp_path, dataset_path, checkpoint_uniforme):
    out = tmp_path / "dump.csv"
    assert main(["--no-registry", "inspect", "--checkpoint", str(checkpoint_uniforme), "--data", str(dataset_path),
                 "-o", str(out)]) == 0
    df = pd.read_csv(out)
    assert len(df) == 4 * 2 * 3
    assert (df["mu_raw"] == 0.5).all()
    assert np.allclose(df.groupby("set_id")["mu_normalized"].sum(), 1.0)


def test_gradcheck_poucas_seeds(tmp_path, capsys):
    out = tmp_path / "gc.csv"
    assert main(["--no-registry", "gradcheck", "--seeds", "3", "-o", str(out)]) == 0
    df = pd.read_csv(out)
    assert sorted(df["seed"].unique()) == [0, 1, 2]
    assert df["passed"].all()
    assert "3/3" in capsys.readouterr().out


def test_gradcheck_sem_seeds(tmp_path):
    assert main(["--no-registry", "gradcheck", "--seeds", "0", "-o", str(tmp_path / "gc.csv")]) == 2


def test_registro_de_execucoes(tmp_path, dataset_path, checkpoint_uniforme, capsys):
    registry = str(tmp_path / "runs.db")
    assert main(["--registry", registry, "eval", "--checkpoint", str(checkpoint_uniforme),
                 "--data", str(dataset_path), "--methods", "qan", "--out-dir", str(tmp_path / "eval")]) == 0
    assert main(["--registry", registry, "gen", "--seed", "1", "--rho", "2", "-o", str(tmp_path / "x")]) == 2
    runs = listar_execucoes(registry)
    assert list(runs["comando"]) == ["gen", "eval"]
    assert list(runs["status"]) == ["erro", "ok"]
    metricas = listar_metricas(registry, int(runs["id"].iloc[1]))
    assert "cmc@1" in set(metricas["metrica"])
    capsys.readouterr()
    assert main(["--registry", registry, "runs"]) == 0
    assert "eval" in capsys.readouterr().out


def test_runs_mostra_metricas_da_execucao(tmp_path, dataset_path, checkpoint_uniforme, capsys):
    registry = str(tmp_path / "runs.db")
    assert main(["--registry", registry, "eval", "--checkpoint", str(checkpoint_uniforme),
                 "--data", str(dataset_path), "--methods", "avepool", "--out-dir", str(tmp_path / "eval")]) == 0
    execucao_id = int(listar_execucoes(registry)["id"].iloc[0])
    capsys.readouterr()
    assert main(["--registry", registry, "runs", "--id", str(execucao_id)]) == 0
    out = capsys.readouterr().out
    assert "cmc@1" in out
    assert "tpr@1e-3" in out
    assert main(["--registry", registry, "runs", "--id", str(execucao_id + 1)]) == 0
    assert "Nenhuma métrica" in capsys.readouterr().out


def test_train_com_features_congeladas(tmp_path, dataset_path):
    out = tmp_path / "fixo"
    assert _train(dataset_path, out, "--epochs", "2", "--triplets", "4", "--pretrain", "0",
                  "--margin", "50", "--freeze-features") == 0
    inicial = load_checkpoint(out / "ckpt_0.qanmodel")
    final = load_checkpoint(out / "ckpt_2.qanmodel")
    for name, value in inicial.params.params.items():
        if name.startswith(("trunk.", "feature.")):
            assert np.array_equal(final.params.params[name], value), name
    assert not np.array_equal(final.params.params["quality.1.W"], inicial.params.params["quality.1.W"])
    assert not np.array_equal(final.params.params["classifier.W"], inicial.params.params["classifier.W"])
    assert json.loads((out / "manifest.json").read_text(encoding="utf-8"))["configs"]["train"]["freeze_features"]
