import math


def validar_probabilidade(valor, nome="valor"):
    """Valida se o valor está em [0, 1]"""
    if not (isinstance(valor, (int, float)) and math.isfinite(valor)):
        return False, f"{nome} deve ser um número finito"
    if not 0 <= valor <= 1:
        return False, f"{nome} deve estar entre 0 e 1"
    return True, ""


def validar_inteiro_positivo(valor, nome="valor", minimo=1):
    """Valida se o valor é inteiro e >= minimo"""
    if isinstance(valor, bool) or not isinstance(valor, int):
        return False, f"{nome} deve ser inteiro"
    if valor < minimo:
        return False, f"{nome} deve ser maior ou igual a {minimo}"
    return True, ""


def validar_seed(seed):
    """Valida semente de 64 bits sem sinal"""
    ok, msg = validar_inteiro_positivo(seed, "seed", minimo=0)
    if not ok:
        return ok, msg
    if seed >= 2 ** 64:
        return False, "seed deve caber em 64 bits sem sinal"
    return True, ""


def validar_gen_spec(spec):
    """Valida os parâmetros de geração do conjunto sintético"""
    for nome in ("n_identities", "sets_per_identity", "samples_per_set", "d_in"):
        ok, msg = validar_inteiro_positivo(getattr(spec, nome), nome)
        if not ok:
            return ok, msg
    ok, msg = validar_inteiro_positivo(spec.n_test_identities, "n_test_identities", minimo=0)
    if not ok:
        return ok, msg
    for nome in ("rho", "beta_lo", "beta_hi"):
        ok, msg = validar_probabilidade(getattr(spec, nome), nome)
        if not ok:
            return ok, msg
    if spec.beta_lo > spec.beta_hi:
        return False, "beta_lo deve ser menor ou igual a beta_hi"
    if not (math.isfinite(spec.noise_sigma) and spec.noise_sigma >= 0):
        return False, "noise_sigma deve ser finito e não negativo"
    return validar_seed(spec.seed)


def validar_qan_config(config):
    """Valida a arquitetura do modelo"""
    ok, msg = validar_inteiro_positivo(config.d_in, "d_in")
    if not ok:
        return ok, msg
    if not config.trunk_dims:
        return False, "trunk_dims deve ter pelo menos uma camada"
    for tamanho in (*config.trunk_dims, *config.feature_hidden):
        ok, msg = validar_inteiro_positivo(tamanho, "tamanho de camada")
        if not ok:
            return ok, msg
    if not 1 <= config.split_index <= len(config.trunk_dims):
        return False, f"split_index deve estar entre 1 e {len(config.trunk_dims)}"
    for nome, minimo in (("d_embed", 1), ("quality_hidden", 0), ("n_classes", 1)):
        ok, msg = validar_inteiro_positivo(getattr(config, nome), nome, minimo=minimo)
        if not ok:
            return ok, msg
    if not (math.isfinite(config.margin) and config.margin > 0):
        return False, "margin (delta) deve ser maior que zero"
    if not (math.isfinite(config.lambda_class) and config.lambda_class >= 0):
        return False, "lambda_class deve ser maior ou igual a zero"
    return True, ""


def validar_train_config(config):
    """Valida os hiperparâmetros de treinamento"""
    for nome in ("epochs", "pretrain_epochs"):
        ok, msg = validar_inteiro_positivo(getattr(config, nome), nome, minimo=0)
        if not ok:
            return ok, msg
    ok, msg = validar_inteiro_positivo(config.triplets_per_epoch, "triplets_per_epoch")
    if not ok:
        return ok, msg
    if not (math.isfinite(config.lr) and config.lr > 0):
        return False, "lr deve ser maior que zero"
    if not (math.isfinite(config.pretrain_lr) and config.pretrain_lr >= 0):
        return False, "pretrain_lr deve ser maior ou igual a zero"
    if not 0 < config.lr_decay <= 1:
        return False, "lr_decay deve estar em (0, 1]"
    if not 0 <= config.momentum < 1:
        return False, "momentum deve estar em [0, 1)"
    if not 0 <= config.pretrain_momentum < 1:
        return False, "pretrain_momentum deve estar em [0, 1)"
    if not (math.isfinite(config.quality_lr_scale) and config.quality_lr_scale > 0):
        return False, "quality_lr_scale deve ser maior que zero"
    if not 0 <= config.weight_decay < 1:
        return False, "weight_decay deve estar em [0, 1)"
    return validar_seed(config.seed)


def validar_eval_options(options, metodos_validos, distancias_validas):
    """Valida métodos e distância pedidos para a avaliação"""
    if not options.methods:
        return False, "informe pelo menos um método de avaliação"
    desconhecidos = [m for m in options.methods if m not in metodos_validos]
    if desconhecidos:
        return False, f"métodos desconhecidos: {', '.join(desconhecidos)}"
    if len(set(options.methods)) != len(options.methods):
        return False, "métodos repetidos"
    if options.pooled_distance not in distancias_validas:
        return False, f"distância desconhecida para vetores agregados: {options.pooled_distance}"
    return validar_seed(options.seed)
