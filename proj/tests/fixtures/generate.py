"""Regenerates the oracle fixture tables from first principles with numpy.

Each table is plain text: '#' comment lines, whitespace-separated reals, and a final
`checksum <hex>` line holding FNV-1a 64 over the data lines (each terminated by '\n').
"""

import pathlib

import numpy as np

HERE = pathlib.Path(__file__).resolve().parent

N_STATES, N_ACTIONS = 5, 3
MOVE_PROB = 0.75
BONUS = [0.2, 0.0, 0.0, 0.0, 1.0]
GAMMA = 0.9


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def write_table(name: str, comments: list[str], rows: list[list[float]]) -> None:
    data = "".join(" ".join(f"{v:.17g}" for v in row) + "\n" for row in rows)
    header = "".join(f"# {c}\n" for c in comments)
    (HERE / name).write_text(header + data + f"checksum {fnv1a64(data.encode()):016x}\n")


def chain_tables():
    P = np.zeros((N_STATES, N_ACTIONS, N_STATES))
    R = np.zeros((N_STATES, N_ACTIONS))
    for s in range(N_STATES):
        for a, move in enumerate((-1, 0, 1)):
            target = min(max(s + move, 0), N_STATES - 1)
            P[s, a, target] += MOVE_PROB
            P[s, a, s] += 1.0 - MOVE_PROB
            R[s, a] = BONUS[s] - 0.1 * abs(move)
    return P, R


def policy_eval(P, R, pi):
    n = N_STATES * N_ACTIONS
    M = np.eye(n) - GAMMA * np.einsum("san,nb->sanb", P, pi).reshape(n, n)
    return np.linalg.solve(M, R.reshape(n)).reshape(N_STATES, N_ACTIONS)


def q_star(P, R):
    q = np.zeros((N_STATES, N_ACTIONS))
    while True:
        nxt = R + GAMMA * P @ q.max(axis=1)
        if np.max(np.abs(nxt - q)) < 1e-15:
            q = nxt
            break
        q = nxt
    # Cross-check: the greedy policy's exact value must coincide with the fixed point.
    greedy = np.zeros((N_STATES, N_ACTIONS))
    greedy[np.arange(N_STATES), q.argmax(axis=1)] = 1.0
    exact = policy_eval(P, R, greedy)
    assert np.max(np.abs(exact - q)) < 1e-12
    return exact


def pointmass_expert_return(pos: float) -> float:
    p, v, total = pos, 0.0, 0.0
    for _ in range(200):
        a = float(np.clip(-2.0 * p - 1.0 * v, -1.0, 1.0))
        v = 0.95 * v + 0.1 * a
        p = p + 0.1 * v
        if abs(p) > 1.0:
            p, v = float(np.clip(p, -1.0, 1.0)), 0.0
        total += -abs(p) - 0.01 * a * a
        if abs(p) < 0.02 and abs(v) < 0.02:
            break
    return total


def main() -> None:
    P, R = chain_tables()
    write_table(
        "discrete_chain_mdp.txt",
        ["discrete_chain: 5 states, actions (-1, 0, +1)", "row per (s, a): P(s'=0..4 | s, a) then r(s, a)"],
        [list(P[s, a]) + [R[s, a]] for s in range(N_STATES) for a in range(N_ACTIONS)],
    )
    write_table(
        "discrete_chain_qstar.txt",
        ["discrete_chain optimal action values, gamma 0.9", "row per state: Q*(s, -1) Q*(s, 0) Q*(s, +1)"],
        q_star(P, R).tolist(),
    )
    uniform = np.full((N_STATES, N_ACTIONS), 1.0 / N_ACTIONS)
    write_table(
        "discrete_chain_qbeta_uniform.txt",
        ["discrete_chain action values of the uniform policy, gamma 0.9", "row per state"],
        policy_eval(P, R, uniform).tolist(),
    )
    write_table(
        "pointmass1d_expert_return.txt",
        ["pointmass1d: undiscounted return of the PD expert from (pos, vel) = (1, 0) and (-0.5, 0)"],
        [[pointmass_expert_return(1.0)], [pointmass_expert_return(-0.5)]],
    )


if __name__ == "__main__":
    main()
