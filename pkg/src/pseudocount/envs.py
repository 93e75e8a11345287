"""Small environments and frame-stream generators.

All environments expose ``reset() -> state``, ``step(action) -> (state,
reward, terminal)`` and ``render() -> QuantizedFrame``. ``state`` is an integer
id usable by tabular agents. ``episode_over`` becomes true on termination or
when the per-episode step cap is hit, in which case ``truncated`` is set.
"""

from __future__ import annotations

from typing import Iterator, List, Optional, Tuple

import numpy as np

from pseudocount.density import DEFAULT_BINS, QuantizedFrame
from pseudocount.errors import DomainError


class EnvError(RuntimeError):
    """Raised when stepping an environment whose episode is over."""


class _Episodic:
    cap: Optional[int]

    def _begin(self):
        self.t = 0
        self.done = False
        self.truncated = False

    @property
    def episode_over(self) -> bool:
        return self.done or self.truncated

    def _advance(self, terminal):
        if self.episode_over:
            raise EnvError("step called on a finished episode; call reset()")
        self.t += 1
        self.done = terminal
        if not terminal and self.cap is not None and self.t >= self.cap:
            self.truncated = True


class ChainMdp(_Episodic):
    """Positions ``0..length``; action 0 moves left, 1 moves right.

    The only reward is 1 on reaching position ``length``, which ends the
    episode. Moving left at position 0 stays put.
    """

    n_actions = 2

    def __init__(self, length: int = 30, cap: Optional[int] = None, bins: int = DEFAULT_BINS):
        if length < 1:
            raise DomainError("chain length must be >= 1", field="length")
        self.length = length
        self.cap = cap
        self.bins = bins
        self.reset()

    @property
    def n_states(self) -> int:
        return self.length + 1

    @property
    def frame_shape(self) -> Tuple[int, int]:
        return (1, self.length + 1)

    def reset(self) -> int:
        self._begin()
        self.position = 0
        return self.position

    def state(self) -> int:
        return self.position

    def step(self, action: int):
        if self.episode_over:
            raise EnvError("step called on a finished episode; call reset()")
        if action == 1:
            self.position += 1
        elif action == 0:
            self.position = max(self.position - 1, 0)
        else:
            raise DomainError(f"invalid action {action}", field="action")
        terminal = self.position == self.length
        self._advance(terminal)
        return self.position, (1.0 if terminal else 0.0), terminal

    def render(self) -> QuantizedFrame:
        px = np.zeros(self.frame_shape, dtype=np.int64)
        px[0, self.position] = self.bins - 1
        return QuantizedFrame(px, bins=self.bins)


# cell codes of the rooms layout
FLOOR, WALL, GOAL, KEY, LOCKED = 0, 1, 2, 3, 4
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))  # up, down, left, right


class RoomsGridworld(_Episodic):
    """``rooms x rooms`` square rooms of ``room_size`` cells joined by doors.

    The agent starts in the top-left corner of the top-left room and receives
    the only reward (1, terminal) at the far corner of the bottom-right room.
    With ``key=True`` the door into the goal room is locked until the agent
    has stepped on the key, placed in the far corner of the top-right room.
    Rendering maps every grid cell to one pixel, so frames are
    ``(rooms * (room_size + 1) + 1)`` pixels square.
    """

    n_actions = 4

    def __init__(self, rooms: int = 2, room_size: int = 5, key: bool = False,
                 cap: Optional[int] = 100, bins: int = DEFAULT_BINS):
        if rooms < 1 or room_size < 1:
            raise DomainError("rooms and room_size must be positive")
        if key and rooms < 2:
            raise DomainError("the key variant needs at least 2x2 rooms", field="key")
        if bins < 6:
            raise DomainError("rendering needs at least 6 bins", field="bins")
        self.rooms = rooms
        self.room_size = room_size
        self.has_key_variant = key
        self.cap = cap
        self.bins = bins
        size = rooms * (room_size + 1) + 1
        self.size = size
        grid = np.full((size, size), FLOOR, dtype=np.int64)
        walls = np.arange(0, size, room_size + 1)
        grid[walls, :] = WALL
        grid[:, walls] = WALL
        mid = room_size // 2 + 1
        for r in range(rooms):
            for w in walls[1:-1]:
                grid[r * (room_size + 1) + mid, w] = FLOOR  # door between horizontal neighbours
                grid[w, r * (room_size + 1) + mid] = FLOOR  # door between vertical neighbours
        self.start = (1, 1)
        self.goal = (size - 2, size - 2)
        grid[self.goal] = GOAL
        self.key_cell = None
        self.locked_door = None
        if key:
            self.key_cell = (1, size - 2)
            # the goal room's upper door is the locked one; its left door becomes wall
            base = (rooms - 1) * (room_size + 1)
            self.locked_door = (base, base + mid)
            grid[base + mid, base] = WALL
        self.grid = grid
        self._cells = [(i, j) for i in range(size) for j in range(size) if grid[i, j] != WALL]
        self._cell_index = {c: k for k, c in enumerate(self._cells)}
        self.reset()

    @property
    def frame_shape(self) -> Tuple[int, int]:
        return (self.size, self.size)

    @property
    def n_states(self) -> int:
        return len(self._cells) * (2 if self.has_key_variant else 1)

    def reset(self) -> int:
        self._begin()
        self.position = self.start
        self.holding_key = False
        return self.state()

    def state(self) -> int:
        idx = self._cell_index[self.position]
        return idx * 2 + int(self.holding_key) if self.has_key_variant else idx

    def _blocked(self, cell) -> bool:
        i, j = cell
        if not (0 <= i < self.size and 0 <= j < self.size) or self.grid[i, j] == WALL:
            return True
        return cell == self.locked_door and not self.holding_key

    def step(self, action: int):
        if self.episode_over:
            raise EnvError("step called on a finished episode; call reset()")
        if not 0 <= action < 4:
            raise DomainError(f"invalid action {action}", field="action")
        di, dj = MOVES[action]
        target = (self.position[0] + di, self.position[1] + dj)
        if not self._blocked(target):
            self.position = target
        if self.position == self.key_cell:
            self.holding_key = True
        terminal = self.position == self.goal
        self._advance(terminal)
        return self.state(), (1.0 if terminal else 0.0), terminal

    def render(self) -> QuantizedFrame:
        b = self.bins
        px = np.zeros((self.size, self.size), dtype=np.int64)
        px[self.grid == WALL] = b // 2
        px[self.goal] = b // 4
        if self.key_cell is not None and not self.holding_key:
            px[self.key_cell] = b // 2 + 1
        if self.locked_door is not None and not self.holding_key:
            px[self.locked_door] = b // 2 - 1
        px[self.position] = b - 1
        return QuantizedFrame(px, bins=b)

    def reachable_states(self) -> List[Tuple[Tuple[int, int], bool]]:
        """Every ``(position, holding_key)`` pair reachable from the start."""
        saved = (self.position, self.holding_key, self.t, self.done, self.truncated)
        seen = {(self.start, False)}
        frontier = [(self.start, False)]
        while frontier:
            pos, key = frontier.pop()
            for di, dj in MOVES:
                self.position, self.holding_key = pos, key
                target = (pos[0] + di, pos[1] + dj)
                if self._blocked(target) or pos == self.goal:
                    continue
                nxt = (target, key or target == self.key_cell)
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        self.position, self.holding_key, self.t, self.done, self.truncated = saved
        return sorted(seen)

    def set_state(self, position, holding_key=False):
        self._begin()
        self.position = tuple(position)
        self.holding_key = bool(holding_key)


class RandomMdp:
    """Finite MDP with Dirichlet transition rows and uniform rewards in [-1, 1].

    Continuing (never terminal). ``P[s, a]`` is the next-state distribution
    and ``R[s, a]`` the expected reward of taking ``a`` in ``s``.
    """

    episode_over = False
    truncated = False

    def __init__(self, n_states: int = 5, n_actions: int = 2, gamma: float = 0.9,
                 seed: int = 0, concentration: float = 1.0):
        rng = np.random.default_rng(seed)
        self.n_states = n_states
        self.n_actions = n_actions
        self.gamma = gamma
        self.P = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
        self.P /= self.P.sum(axis=-1, keepdims=True)
        self.R = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
        self._rng = np.random.default_rng(rng.integers(2**63))
        self.position = 0

    def reset(self) -> int:
        self.position = 0
        return 0

    def state(self) -> int:
        return self.position

    def step(self, action: int):
        reward = float(self.R[self.position, action])
        self.position = int(self._rng.choice(self.n_states, p=self.P[self.position, action]))
        return self.position, reward, False

    def render(self) -> QuantizedFrame:
        px = np.zeros((1, self.n_states), dtype=np.int64)
        px[0, self.position] = DEFAULT_BINS - 1
        return QuantizedFrame(px)


class SwitchingFrameStream:
    """Frames from ``n_generators`` synthetic "policies", switching every ``period`` frames.

    Each frame is a background of horizontal bands with a small bright
    sprite moving by a ``k``-specific biased random walk, so consecutive
    frames are strongly correlated like an agent's observation stream. The
    generators play the role of successive policies in one environment: by
    default they share the background and differ only in how the sprite
    moves. With ``shared_background=False`` every generator also gets its own
    band levels, a much larger shift at each switch. The frame at position
    ``t`` comes from generator ``(t // period) % n_generators``.
    """

    def __init__(self, height: int = 42, width: int = 42, bins: int = DEFAULT_BINS,
                 n_generators: int = 4, period: int = 4000, length: Optional[int] = None,
                 seed: int = 0, sprite: int = 3, shared_background: bool = True):
        if period < 1 or n_generators < 1:
            raise DomainError("period and n_generators must be positive")
        self.height, self.width, self.bins = height, width, bins
        self.n_generators = n_generators
        self.period = period
        self.length = length
        self.seed = seed
        self.sprite = sprite
        rng = np.random.default_rng(seed)
        band = max(1, height // 6)
        self._backgrounds = []
        self._drift = []
        self.shared_background = shared_background
        for k in range(n_generators):
            if k == 0 or not shared_background:
                levels = rng.integers(0, max(1, bins - 2), size=-(-height // band))
                bg = np.repeat(levels, band)[:height][:, None] * np.ones((1, width), dtype=np.int64)
            self._backgrounds.append(bg)
            self._drift.append(rng.uniform(-0.5, 0.5, size=2))
        self._rng = np.random.default_rng(rng.integers(2**63))
        self._pos = np.array([height / 2, width / 2])
        self.t = 0

    def generator_index(self, t: int) -> int:
        return (t // self.period) % self.n_generators

    def next_frame(self) -> QuantizedFrame:
        if self.length is not None and self.t >= self.length:
            raise StopIteration("frame stream exhausted")
        k = self.generator_index(self.t)
        step = self._drift[k] + self._rng.normal(0.0, 1.0, size=2)
        hi = np.array([self.height - self.sprite, self.width - self.sprite], dtype=float)
        self._pos = np.clip(self._pos + step, 0.0, hi)
        px = self._backgrounds[k].copy()
        i, j = np.round(self._pos).astype(int)
        px[i:i + self.sprite, j:j + self.sprite] = self.bins - 1
        self.t += 1
        return QuantizedFrame(px, bins=self.bins)

    def __iter__(self) -> Iterator[QuantizedFrame]:
        while self.length is None or self.t < self.length:
            yield self.next_frame()

    def record(self, n: int) -> List[QuantizedFrame]:
        return [self.next_frame() for _ in range(n)]


ORDERS = ("sequential", "permuted", "sampled")


def replay_order(n: int, order: str, rng: np.random.Generator) -> np.ndarray:
    """Indices into a recorded buffer of ``n`` frames for one training pass.

    ``sequential`` keeps stream order, ``permuted`` visits every frame once in
    random order, ``sampled`` draws ``n`` indices with replacement.
    """
    if order == "sequential":
        return np.arange(n)
    if order == "permuted":
        return rng.permutation(n)
    if order == "sampled":
        return rng.integers(0, n, size=n)
    raise DomainError(f"unknown replay order {order!r}", field="order")
