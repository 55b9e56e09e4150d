"""~/db/
sql query repository
"""

##########
#               runs
##########

UPSERT_RUN = """
INSERT INTO run (run_id, command, config_json)
VALUES (?, ?, ?)
ON CONFLICT (run_id) DO UPDATE SET
  command = excluded.command,
  config_json = excluded.config_json;
"""

GET_RUN = """
SELECT run_id, command, config_json
FROM run
WHERE run_id = ?;
"""

LIST_RUNS = """
SELECT run_id, command
FROM run
ORDER BY command, run_id;
"""

##########
#               sweep rows
##########

CLEAR_SWEEP_ROWS = """
DELETE FROM sweep_row WHERE run_id = ?;
"""

INSERT_SWEEP_ROW = """
INSERT INTO sweep_row (run_id, c_order, c, N, lambda_num, lambda_den, verdict, destabilizer_ref)
VALUES (?, ?, ?, ?, ?, ?, ?, ?);
"""

# the CSV contract: column order and row order of every sweep export
LIST_SWEEP_ROWS = """
SELECT c, N, lambda_num, lambda_den, verdict, destabilizer_ref
FROM sweep_row
WHERE run_id = '{run_id}'
ORDER BY c_order, N
"""

COPY_SWEEP_CSV = """
COPY ({select}) TO '{path}' (HEADER, DELIMITER ',');
"""

COUNT_SIGN_CHANGES = """
WITH finest AS (
  SELECT c_order, c, (lambda_num NOT LIKE '-%' AND lambda_num <> '0') AS positive
  FROM sweep_row
  WHERE run_id = ? AND lambda_num IS NOT NULL
    AND N = (SELECT MAX(N) FROM sweep_row WHERE run_id = ?)
)
SELECT COUNT(*) FROM (
  SELECT positive, LAG(positive) OVER (ORDER BY c_order) AS previous
  FROM finest
) t
WHERE previous IS NOT NULL AND positive <> previous;
"""

##########
#               stability estimates
##########

CLEAR_STABILITY_ROWS = """
DELETE FROM stability_estimate WHERE run_id = ?;
"""

INSERT_STABILITY_ROW = """
INSERT INTO stability_estimate (run_id, N, norm, lambda_num, lambda_den, base_node)
VALUES (?, ?, ?, ?, ?, ?);
"""

LIST_STABILITY_ROWS = """
SELECT N, norm, lambda_num, lambda_den, base_node
FROM stability_estimate
WHERE run_id = ?
ORDER BY N;
"""
