from .db_utils import get_db_connection, create_tables
