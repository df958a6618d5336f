import math


def format_percentage(value):
    """Formata fração [0, 1] como percentual com 2 casas decimais"""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{100 * value:.2f}%"


def format_decimal(value, casas=4):
    """Formata número real com casas decimais fixas"""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{value:.{casas}f}"


def format_full(value):
    """Representação decimal com 17 dígitos significativos (ida e volta exata)"""
    return format(float(value), ".17g")


def format_duration(seconds):
    """Formata duração em segundos como mm:ss"""
    minutos, segundos = divmod(int(round(seconds)), 60)
    return f"{minutos:02d}:{segundos:02d}"
