"""Cooperative 2-D navigation: three agents drive to fixed landmarks without touching.

State layout (12 dims): ``x0, y0, x1, y1, x2, y2, vx0, vy0, vx1, vy1, vx2, vy2``.
Only positions are mutable; velocities start at zero. The scripted policy
drives each agent straight at its landmark and adds a weak repulsion from
neighbours closer than ``repulse_radius``. The repulsion is too weak to
resolve near head-on conflicts, which is where collisions come from.
"""
from __future__ import annotations

import math

import numpy as np

from ..mdp import EnvSpec, Environment, LegalSpace
from .base import register_crash_predicate, register_env

N_AGENTS = 3
# Landmarks on a circle of radius 0.7, 120 degrees apart.
GOALS = tuple(
    (round(0.7 * math.cos(a), 12), round(0.7 * math.sin(a), 12))
    for a in (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)
)
D_MIN = 0.1
POS_LIMIT = 1.5


@register_crash_predicate("navi2d_min_separation")
def navi2d_crash(state: np.ndarray, d_min: float = D_MIN) -> bool:
    x0, y0, x1, y1, x2, y2 = (float(v) for v in state[:6])
    d2 = d_min * d_min
    return (
        (x0 - x1) ** 2 + (y0 - y1) ** 2 < d2
        or (x0 - x2) ** 2 + (y0 - y2) ** 2 < d2
        or (x1 - x2) ** 2 + (y1 - y2) ** 2 < d2
    )


class Navi2dPolicy:
    def __init__(self, v_max=0.5, gain=2.0, repulse_radius=0.3, repulse_gain=0.8, goals=GOALS):
        self.v_max = v_max
        self.gain = gain
        self.repulse_radius = repulse_radius
        self.repulse_gain = repulse_gain
        self.goals = goals

    def __call__(self, state) -> np.ndarray:
        pos = [(float(state[2 * i]), float(state[2 * i + 1])) for i in range(N_AGENTS)]
        cmds = []
        for i, (x, y) in enumerate(pos):
            gx, gy = self.goals[i]
            dx, dy = gx - x, gy - y
            dist = math.hypot(dx, dy)
            if dist > 0.0:
                speed = min(self.v_max, self.gain * dist)
                cx, cy = dx / dist * speed, dy / dist * speed
            else:
                cx = cy = 0.0
            for j, (ox, oy) in enumerate(pos):
                if j == i:
                    continue
                rx, ry = x - ox, y - oy
                d = math.hypot(rx, ry)
                if 0.0 < d < self.repulse_radius:
                    push = self.repulse_gain * (self.repulse_radius - d) / self.repulse_radius
                    cx += push * rx / d
                    cy += push * ry / d
            norm = math.hypot(cx, cy)
            if norm > self.v_max:
                cx, cy = cx / norm * self.v_max, cy / norm * self.v_max
            cmds.append((cx, cy))
        return np.array(cmds)


@register_env("navi2d")
class Navi2d(Environment):
    coverage_kind = "grid"

    def __init__(
        self,
        max_step: int = 100,
        dt: float = 0.1,
        v_max: float = 0.5,
        lag: float = 0.5,
        noise: float = 0.01,
        d_min: float = D_MIN,
        goal_tol: float = 0.05,
        repulse_radius: float = 0.3,
        repulse_gain: float = 0.8,
    ):
        self.dt = dt
        self.v_max = v_max
        self.lag = lag
        self.noise = noise
        self.d_min = d_min
        self.goal_tol = goal_tol
        self.repulse_radius = repulse_radius
        self.repulse_gain = repulse_gain
        lower = np.array([-1.0] * 6 + [0.0] * 6)
        upper = np.array([1.0] * 6 + [0.0] * 6)
        self.spec = EnvSpec(
            name="navi2d",
            state_dim=12,
            legal_space=LegalSpace(lower, upper),
            max_step=max_step,
            crash_predicate_id="navi2d_min_separation",
            obs_lower=np.array([-POS_LIMIT] * 6 + [-v_max] * 6),
            obs_upper=np.array([POS_LIMIT] * 6 + [v_max] * 6),
        )

    def make_agent(self):
        return Navi2dPolicy(self.v_max, 2.0, self.repulse_radius, self.repulse_gain)

    def is_crash(self, state):
        return navi2d_crash(state, self.d_min)

    def goal_distances(self, state):
        return [math.hypot(GOALS[i][0] - state[2 * i], GOALS[i][1] - state[2 * i + 1]) for i in range(N_AGENTS)]

    def is_terminal(self, state):
        return max(self.goal_distances(state)) < self.goal_tol

    def check_action(self, action):
        return (
            isinstance(action, np.ndarray)
            and action.shape == (N_AGENTS, 2)
            and bool(np.all(np.isfinite(action)))
        )

    def step(self, state, action, rng):
        lag, dt, vmax = self.lag, self.dt, self.v_max
        eps = rng.normal(0.0, self.noise, 6) if self.noise > 0 else np.zeros(6)
        nxt = np.empty(12)
        for i in range(N_AGENTS):
            vx = lag * state[6 + 2 * i] + (1.0 - lag) * action[i, 0] + eps[2 * i]
            vy = lag * state[7 + 2 * i] + (1.0 - lag) * action[i, 1] + eps[2 * i + 1]
            sp = math.hypot(vx, vy)
            if sp > vmax:
                vx, vy = vx / sp * vmax, vy / sp * vmax
            nxt[6 + 2 * i] = vx
            nxt[7 + 2 * i] = vy
            nxt[2 * i] = min(POS_LIMIT, max(-POS_LIMIT, state[2 * i] + vx * dt))
            nxt[2 * i + 1] = min(POS_LIMIT, max(-POS_LIMIT, state[2 * i + 1] + vy * dt))
        reward = -dt * sum(self.goal_distances(nxt)) / (2.0 * N_AGENTS)
        if self.is_crash(nxt):
            reward -= 1.0
        return nxt, reward
