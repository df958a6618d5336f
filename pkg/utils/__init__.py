from .formatters import format_percentage, format_decimal, format_full
from .validators import validar_probabilidade, validar_inteiro_positivo, validar_seed
from .exceptions import QanError
