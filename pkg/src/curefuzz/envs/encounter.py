"""Two-aircraft horizontal encounter with a scripted turn-advisory policy.

State layout (8 dims, feet / radians / feet per second)::

    own_x, own_y, own_heading, own_speed, int_dx, int_dy, int_heading, int_speed

``int_dx, int_dy`` is the intruder position relative to the ownship, in the
world frame. Headings are measured counter-clockwise from +x, so a positive
turn rate is a left turn. The intruder flies straight; the ownship follows
the advisory. Episodes end once the aircraft are diverging and clear of each
other, so the relative offset never grows past its initial value.

The policy projects both tracks to the closest point of approach (CPA) and
turns away from it when the CPA is close in both space and time. It ignores
intruders in its rear sector (relative bearing beyond +-135 degrees), which is
the deliberate blind spot: overtaking and converging-from-behind geometries
go unanswered.
"""
from __future__ import annotations

import math

import numpy as np

from ..mdp import EnvSpec, Environment, LegalSpace
from .base import register_crash_predicate, register_env

NMAC_FT = 500.0
MAX_SPEED = 1100.0
MIN_SPEED = 200.0
DEG = math.pi / 180.0

COC, WEAK_LEFT, STRONG_LEFT, WEAK_RIGHT, STRONG_RIGHT = range(5)
ADVISORIES = ("clear-of-conflict", "weak-left", "strong-left", "weak-right", "strong-right")
TURN_RATE = (0.0, 1.5 * DEG, 3.0 * DEG, -1.5 * DEG, -3.0 * DEG)

LEGAL_LOWER = np.array([-1000.0, -1000.0, -math.pi / 4, MIN_SPEED, -12000.0, -12000.0, -math.pi, MIN_SPEED])
LEGAL_UPPER = np.array([1000.0, 1000.0, math.pi / 4, MAX_SPEED, 12000.0, 12000.0, math.pi, MAX_SPEED])
OWN_LIMIT = 120000.0
REL_LIMIT = 17000.0


@register_crash_predicate("encounter_nmac")
def encounter_crash(state: np.ndarray) -> bool:
    return math.hypot(state[4], state[5]) < NMAC_FT


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def cpa(state):
    """Time to and distance at the closest point of approach, assuming straight flight."""
    _, _, oh, ov, rx, ry, ih, iv = (float(v) for v in state)
    vx = iv * math.cos(ih) - ov * math.cos(oh)
    vy = iv * math.sin(ih) - ov * math.sin(oh)
    vv = vx * vx + vy * vy
    t = -(rx * vx + ry * vy) / vv if vv > 0.0 else 0.0
    return t, rx + vx * t, ry + vy * t


class EncounterPolicy:
    def __init__(self, horizon=40.0, protect=2500.0, strong_within=20.0, blind_sector=135.0 * DEG):
        self.horizon = horizon
        self.protect = protect
        self.strong_within = strong_within
        self.blind_sector = blind_sector

    def __call__(self, state) -> int:
        t, cx, cy = cpa(state)
        if t <= 0.0 or t > self.horizon or math.hypot(cx, cy) > self.protect:
            return COC
        oh = float(state[2])
        bearing = wrap_angle(math.atan2(state[5], state[4]) - oh)
        if abs(bearing) > self.blind_sector:
            return COC
        # Turn away from the side on which the CPA falls.
        cpa_left = math.cos(oh) * cy - math.sin(oh) * cx > 0.0
        strong = t < self.strong_within
        if cpa_left:
            return STRONG_RIGHT if strong else WEAK_RIGHT
        return STRONG_LEFT if strong else WEAK_LEFT


def no_turn_policy(state) -> int:
    return COC


@register_env("encounter")
class Encounter(Environment):
    coverage_kind = "grid"

    def __init__(self, max_step: int = 200, dt: float = 0.5, alert_cost: float = 0.005, proximity_cost: float = 0.0, stop_when_clear: bool = True):
        self.dt = dt
        self.stop_when_clear = stop_when_clear
        self.alert_cost = alert_cost
        self.proximity_cost = proximity_cost
        own, rel = OWN_LIMIT, REL_LIMIT
        self.spec = EnvSpec(
            name="encounter",
            state_dim=8,
            legal_space=LegalSpace(LEGAL_LOWER, LEGAL_UPPER),
            max_step=max_step,
            crash_predicate_id="encounter_nmac",
            obs_lower=np.array([-own, -own, -math.pi, MIN_SPEED, -rel, -rel, -math.pi, MIN_SPEED]),
            obs_upper=np.array([own, own, math.pi, MAX_SPEED, rel, rel, math.pi, MAX_SPEED]),
        )

    def make_agent(self):
        return EncounterPolicy()

    def is_crash(self, state):
        return encounter_crash(state)

    def is_terminal(self, state):
        # Diverging and clear: with both aircraft flying straight they never reconverge.
        if not self.stop_when_clear:
            return False
        t, _, _ = cpa(state)
        return t <= 0.0 and math.hypot(state[4], state[5]) > 3.0 * NMAC_FT

    def check_action(self, action):
        return isinstance(action, (int, np.integer)) and 0 <= int(action) < len(ADVISORIES)

    def step(self, state, action, rng):
        ox, oy, oh, ov, rx, ry, ih, iv = (float(v) for v in state)
        dt = self.dt
        rate = TURN_RATE[int(action)]
        oh = wrap_angle(oh + rate * dt)
        dox, doy = ov * math.cos(oh) * dt, ov * math.sin(oh) * dt
        ox += dox
        oy += doy
        rx += iv * math.cos(ih) * dt - dox
        ry += iv * math.sin(ih) * dt - doy
        nxt = np.array([ox, oy, oh, ov, rx, ry, ih, iv])
        rng_ft = math.hypot(rx, ry)
        reward = -self.alert_cost * (abs(rate) / TURN_RATE[STRONG_LEFT]) * dt
        reward -= self.proximity_cost * max(0.0, 1.0 - rng_ft / 5000.0) * dt
        if rng_ft < NMAC_FT:
            reward -= 1.0
        return nxt, reward
