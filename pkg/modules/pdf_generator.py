from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from modules.relatorios import tabela_cmc, tabela_roc
from utils.formatters import format_decimal, format_percentage

ESTILO_TABELA = TableStyle([
    ('GRID', (0, 0), (-1, -1), 1, colors.black),
    ('BACKGROUND', (0, 0), (-1, 0), colors.lightgrey),
    ('PADDING', (0, 0), (-1, -1), 6),
    ('ALIGN', (1, 0), (-1, -1), 'RIGHT'),
    ('FONTNAME', (0, 0), (-1, -1), 'Helvetica'),
    ('FONTSIZE', (0, 0), (-1, -1), 9),
])


class RelatorioPDF:
    def __init__(self, filename, titulo="RELATÓRIO DE AVALIAÇÃO"):
        self.filename = filename
        self.titulo = titulo
        self.doc = SimpleDocTemplate(
            self.filename,
            pagesize=A4,
            rightMargin=72,
            leftMargin=72,
            topMargin=72,
            bottomMargin=72
        )
        self.styles = getSampleStyleSheet()
        self.elements = []

        self.styles.add(ParagraphStyle(
            name='CustomTitle',
            parent=self.styles['Title'],
            fontSize=16,
            spaceAfter=30,
            alignment=1  # Centralizado
        ))

    def add_cabecalho(self, dados_execucao):
        """Título e identificação da execução (checkpoint, dataset, seed)"""
        self.elements.append(Paragraph(self.titulo, self.styles['CustomTitle']))
        dados = [[f"{chave}:", str(valor)] for chave, valor in dados_execucao.items()]
        if dados:
            table = Table(dados, colWidths=[120, 350])
            table.setStyle(TableStyle([
                ('GRID', (0, 0), (-1, -1), 1, colors.black),
                ('BACKGROUND', (0, 0), (0, -1), colors.lightgrey),
                ('PADDING', (0, 0), (-1, -1), 6),
                ('FONTNAME', (0, 0), (-1, -1), 'Helvetica'),
                ('FONTSIZE', (0, 0), (-1, -1), 10),
            ]))
            self.elements.append(table)
        self.elements.append(Spacer(1, 20))

    def _add_tabela(self, titulo, df, formatter):
        self.elements.append(Paragraph(titulo, self.styles['Heading2']))
        dados = [list(df.columns)]
        for row in df.itertuples(index=False):
            dados.append([row[0], *(formatter(v) for v in row[1:])])
        table = Table(dados)
        table.setStyle(ESTILO_TABELA)
        self.elements.append(table)
        self.elements.append(Spacer(1, 20))

    def add_cmc(self, report):
        self._add_tabela("Identificação (CMC)", tabela_cmc(report), format_percentage)

    def add_roc(self, report):
        self._add_tabela("Verificação (ROC)", tabela_roc(report), format_decimal)

    def add_qualidade(self, report):
        """Concordância e tabela por decil de q_true"""
        agreement = report.agreement
        if agreement is None:
            self.elements.append(Paragraph(
                "Concordância de qualidade não calculada para este dataset.", self.styles['Normal']
            ))
            return
        texto = (
            f"Spearman(mu, q_true): {format_decimal(agreement.spearman_rho)}<br/>"
            f"Concordância par a par: {format_percentage(agreement.pairwise_agreement)}"
        )
        self.elements.append(Paragraph("Qualidade aprendida", self.styles['Heading2']))
        self.elements.append(Paragraph(texto, self.styles['Normal']))
        self.elements.append(Spacer(1, 10))
        decis = agreement.deciles
        dados = [["decil", "q", "n", "q médio", "mu médio"]]
        for decil, q_lo, q_hi, n, q_mean, mu_mean in decis.itertuples(index=False):
            dados.append([
                decil, f"[{q_lo:.1f}, {q_hi:.1f})", n, format_decimal(q_mean, 3), format_decimal(mu_mean),
            ])
        table = Table(dados)
        table.setStyle(ESTILO_TABELA)
        self.elements.append(table)

    def gerar(self, report, dados_execucao=None):
        """Gera o relatório PDF completo"""
        self.add_cabecalho(dados_execucao or {})
        self.add_cmc(report)
        self.add_roc(report)
        self.add_qualidade(report)
        self.doc.build(self.elements)
        return self.filename


def generate_pdf_report(filename, report, dados_execucao=None):
    """Função principal para gerar o relatório"""
    return RelatorioPDF(filename).gerar(report, dados_execucao)
