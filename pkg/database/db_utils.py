import sqlite3

import pandas as pd

DEFAULT_DB = 'experimentos.db'


def get_db_connection(path=DEFAULT_DB):
    return sqlite3.connect(path)


def create_tables(path=DEFAULT_DB):
    """Cria as tabelas do registro de execuções"""
    conn = get_db_connection(path)
    cursor = conn.cursor()

    # Uma linha por comando executado
    cursor.execute('''
    CREATE TABLE IF NOT EXISTS execucoes (
        id INTEGER PRIMARY KEY AUTOINCREMENT,
        comando TEXT NOT NULL,
        seed INTEGER,
        status TEXT NOT NULL,
        mensagem TEXT,
        manifesto TEXT,
        inicio TEXT NOT NULL,
        fim TEXT
    )''')

    # Métricas de avaliação por método
    cursor.execute('''
    CREATE TABLE IF NOT EXISTS metricas (
        id INTEGER PRIMARY KEY AUTOINCREMENT,
        execucao_id INTEGER NOT NULL,
        metodo TEXT NOT NULL,
        metrica TEXT NOT NULL,
        valor REAL,
        FOREIGN KEY (execucao_id) REFERENCES execucoes(id),
        UNIQUE(execucao_id, metodo, metrica)
    )''')

    conn.commit()
    conn.close()


def registrar_execucao(path, manifest, manifest_path=None, mensagem=None):
    """Registra a execução descrita pelo manifesto; retorna o id"""
    create_tables(path)
    conn = get_db_connection(path)
    cursor = conn.cursor()
    try:
        cursor.execute('''
        INSERT INTO execucoes (comando, seed, status, mensagem, manifesto, inicio, fim)
        VALUES (?, ?, ?, ?, ?, ?, ?)
        ''', (
            manifest.command,
            manifest.seed,
            manifest.status,
            mensagem,
            manifest_path,
            manifest.started_at.isoformat(),
            manifest.finished_at.isoformat() if manifest.finished_at else None,
        ))
        conn.commit()
        return cursor.lastrowid
    finally:
        conn.close()


def registrar_metricas(path, execucao_id, linhas):
    """Grava (método, métrica, valor) para uma execução"""
    conn = get_db_connection(path)
    cursor = conn.cursor()
    try:
        cursor.executemany('''
        INSERT OR REPLACE INTO metricas (execucao_id, metodo, metrica, valor)
        VALUES (?, ?, ?, ?)
        ''', [(execucao_id, metodo, metrica, float(valor)) for metodo, metrica, valor in linhas])
        conn.commit()
    finally:
        conn.close()


def listar_execucoes(path=DEFAULT_DB, limite=20):
    """Execuções mais recentes primeiro"""
    create_tables(path)
    conn = get_db_connection(path)
    try:
        return pd.read_sql_query('''
        SELECT id, comando, seed, status, inicio, fim, manifesto
        FROM execucoes
        ORDER BY id DESC
        LIMIT ?
        ''', conn, params=(limite,))
    finally:
        conn.close()


def listar_metricas(path, execucao_id):
    """Métricas de uma execução, por método e nome da métrica"""
    create_tables(path)
    conn = get_db_connection(path)
    try:
        return pd.read_sql_query('''
        SELECT metodo, metrica, valor FROM metricas
        WHERE execucao_id = ?
        ORDER BY metodo, metrica
        ''', conn, params=(execucao_id,))
    finally:
        conn.close()
