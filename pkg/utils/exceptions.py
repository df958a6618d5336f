class QanError(Exception):
    """Erro base do projeto"""


class ConfigError(QanError):
    """Configuração inválida (flags, dataclasses de configuração)"""


class DimensionError(QanError):
    """Dimensões incompatíveis entre camada, entrada ou gradiente"""


class StaleCacheError(QanError):
    """Cache de forward produzido por parâmetros que já foram atualizados"""


class NonFiniteError(QanError):
    """Valor não finito em perda ou gradiente"""


class TripletError(QanError):
    """Conjunto de dados não permite formar uma tripla"""


class EvaluationError(QanError):
    """Protocolo de avaliação não pode ser aplicado aos dados"""


class ParseError(QanError):
    """Falha de leitura de arquivo texto, com número da linha"""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}:"
        if line is not None:
            prefix += f"{line}:"
        super().__init__(f"{prefix} {message}" if prefix else message)
