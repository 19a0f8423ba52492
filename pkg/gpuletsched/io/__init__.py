from .csv_files import (
    read_corun_table,
    read_factor_table,
    read_profile_table,
    read_table,
    read_trace_table,
    write_table,
)
