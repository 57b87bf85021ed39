"""Simulated slot-filling dialogue environment.

A goal-driven user simulator interacts with the system at the semantic
level. The user's true act is corrupted by a semantic-error-rate channel
into an N-best list with confidence scores; a simple mixture tracker
maintains per-slot value distributions. Rewards are -1 per turn plus +20
on success; dialogues are capped at 25 turns.

The three domain presets (CR, SFR, LAP) differ by the number of
constraint slots, requestable slots and ontology values, which drive the
state and action dimensions. Value sets are bucketed at 10 values per
slot to keep the belief compact while preserving the relative difficulty
ordering of the domains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_TURNS = 25
MAX_VALUE_BUCKETS = 10
DEFAULT_PATIENCE = 5

# sentinel for a confirmation answer misheard as an affirmation of the
# system's own hypothesis, and the confidence the recognizer assigns it
AFFIRMED = object()
AFFIRMED_CONFIDENCE = 0.85

# user act kinds (semantic level)
U_INFORM = "inform"    # slot/value pair
U_REQUEST = "request"  # requestable-slot index
U_BYE = "bye"
U_NULL = "null"


@dataclass(frozen=True)
class DomainSpec:
    """Ontology sizes for one task domain."""
    name: str
    n_constraint_slots: int
    n_requests: int
    values_per_slot: tuple
    n_entities: int = 100
    # how many wrong offers the simulated user tolerates before hanging up;
    # users running complex tasks put up with more mistakes
    wrong_offer_tolerance: int = 2

    def __post_init__(self):
        if len(self.values_per_slot) != self.n_constraint_slots:
            raise ValueError("values_per_slot length must match slot count")
        if self.n_entities < 1:
            raise ValueError("n_entities must be >= 1")
        object.__setattr__(self, "values_per_slot", tuple(self.values_per_slot))

    @property
    def slot_buckets(self):
        """Tracked value buckets per slot (ontology values capped at 10)."""
        return tuple(min(v, MAX_VALUE_BUCKETS) for v in self.values_per_slot)

    @property
    def n_actions(self):
        # Request x slots, Confirm x slots, Inform, Repeat, Bye
        return 2 * self.n_constraint_slots + 3

    @property
    def belief_dim(self):
        # per slot: value buckets + "unknown"; request flags; turn; last act
        return (sum(b + 1 for b in self.slot_buckets) + self.n_requests
                + 1 + self.n_actions)


def _split_values(total, n_slots):
    base, rem = divmod(total, n_slots)
    return tuple(base + (1 if i < rem else 0) for i in range(n_slots))


DOMAIN_PRESETS = {
    # name: (constraint slots, requests, total ontology values)
    "CR": DomainSpec("CR", 3, 9, _split_values(268, 3), n_entities=100),
    "SFR": DomainSpec("SFR", 6, 11, _split_values(636, 6), n_entities=150),
    "LAP": DomainSpec("LAP", 11, 21, _split_values(257, 11), n_entities=150,
                      wrong_offer_tolerance=7),
}


# ---------------------------------------------------------------------------
# Machine acts: flat index <-> structured

ACT_INFORM = "inform"
ACT_REPEAT = "repeat"
ACT_BYE = "bye"


def act_request(slot):
    return slot


def act_confirm(domain, slot):
    return domain.n_constraint_slots + slot


def act_inform(domain):
    return 2 * domain.n_constraint_slots


def act_repeat(domain):
    return 2 * domain.n_constraint_slots + 1


def act_bye(domain):
    return 2 * domain.n_constraint_slots + 2


def decode_act(domain, action):
    """Returns (kind, slot) where kind in {request, confirm, inform,
    repeat, bye} and slot is -1 for slotless acts."""
    n = domain.n_constraint_slots
    if not 0 <= action < domain.n_actions:
        raise ValueError(f"action {action} out of range")
    if action < n:
        return ("request", action)
    if action < 2 * n:
        return ("confirm", action - n)
    return ((ACT_INFORM, ACT_REPEAT, ACT_BYE)[action - 2 * n], -1)


@dataclass(frozen=True)
class UserAct:
    kind: str
    slot: int = -1
    value: int = -1
    request: int = -1


@dataclass(frozen=True)
class NBestList:
    """Ranked user-act hypotheses with confidences summing to 1."""
    hypotheses: tuple  # of (UserAct, confidence)

    def __post_init__(self):
        confs = [c for _, c in self.hypotheses]
        if not 1 <= len(confs) <= 3:
            raise ValueError("N-best list must hold 1-3 hypotheses")
        if abs(sum(confs) - 1.0) > 1e-9:
            raise ValueError("confidences must sum to 1")
        acts = [a for a, _ in self.hypotheses]
        if len(set(acts)) != len(acts):
            raise ValueError("hypotheses must be distinct")

    @property
    def top(self):
        return self.hypotheses[0][0]


@dataclass
class UserGoal:
    constraints: dict          # slot -> bucket value
    requests: set              # requestable-slot indices
    patience: int = DEFAULT_PATIENCE


# ---------------------------------------------------------------------------
# Belief state

class BeliefState:
    """Tracked dialogue state: per-slot value distributions (plus an
    "unknown" bucket), observed pending-request flags and meta features
    (normalized turn, one-hot of the last machine act)."""

    def __init__(self, domain: DomainSpec):
        self.domain = domain
        self.slot_dists = [np.zeros(b + 1) for b in domain.slot_buckets]
        for d in self.slot_dists:
            d[-1] = 1.0  # all mass on "unknown"
        self.request_flags = np.zeros(domain.n_requests)
        self.turn = 0
        self.last_act = -1

    def clone(self):
        b = BeliefState.__new__(BeliefState)
        b.domain = self.domain
        b.slot_dists = [d.copy() for d in self.slot_dists]
        b.request_flags = self.request_flags.copy()
        b.turn = self.turn
        b.last_act = self.last_act
        return b

    def top_value(self, slot):
        """(bucket, mass) of the most likely known value of a slot."""
        d = self.slot_dists[slot][:-1]
        if d.size == 0:
            return -1, 0.0
        i = int(np.argmax(d))
        return i, float(d[i])

    def unknown_mass(self, slot):
        return float(self.slot_dists[slot][-1])

    def vector(self) -> np.ndarray:
        parts = list(self.slot_dists) + [self.request_flags]
        meta = np.zeros(1 + self.domain.n_actions)
        meta[0] = self.turn / MAX_TURNS
        if self.last_act >= 0:
            meta[1 + self.last_act] = 1.0
        parts.append(meta)
        return np.concatenate(parts)


def update_belief(belief: BeliefState, obs: NBestList) -> BeliefState:
    """Fold an observed N-best list into a fresh belief.

    Each inform hypothesis shifts its slot's distribution toward the
    hypothesized value by its confidence (convex mixture, then the
    distribution stays normalized by construction). A request act in the
    top hypothesis raises that request flag; other acts leave the belief
    untouched.
    """
    out = belief.clone()
    for rank, (act, conf) in enumerate(obs.hypotheses):
        if act.kind == U_INFORM:
            d = out.slot_dists[act.slot]
            d *= (1.0 - conf)
            d[act.value] += conf
        elif act.kind == U_REQUEST and rank == 0:
            out.request_flags[act.request] = 1.0
    return out


# ---------------------------------------------------------------------------
# SER noise channel

def _confuse(act: UserAct, domain: DomainSpec, rng) -> UserAct:
    if act.kind == U_INFORM:
        n_vals = domain.slot_buckets[act.slot]
        if n_vals > 1:
            wrong = int(rng.integers(n_vals - 1))
            if wrong >= act.value:
                wrong += 1
            return UserAct(U_INFORM, slot=act.slot, value=wrong)
        return UserAct(U_NULL)
    if act.kind == U_REQUEST:
        if domain.n_requests > 1:
            wrong = int(rng.integers(domain.n_requests - 1))
            if wrong >= act.request:
                wrong += 1
            return UserAct(U_REQUEST, request=wrong)
        return UserAct(U_NULL)
    return UserAct(U_NULL)


def corrupt_user_act(true_act: UserAct, ser: float, domain: DomainSpec,
                     rng: np.random.Generator) -> NBestList:
    """Corrupt the true user act into an N-best list.

    With probability 1 - ser the top hypothesis is the true act, otherwise
    a confusion of it. Up to two extra distinct hypotheses are appended;
    corrupted tops always come with competitors (errors are low-confidence,
    as a confidence scorer would make them). Confidences are a symmetric
    Dirichlet draw sorted descending.
    """
    if not 0.0 <= ser < 1.0:
        raise ValueError("ser must be in [0, 1)")
    if ser == 0.0:
        return NBestList(((true_act, 1.0),))

    top_correct = rng.random() >= ser
    top = true_act if top_correct else _confuse(true_act, domain, rng)
    hyps = [top]
    if top_correct:
        n_hyp = 1 + int(rng.choice(3, p=[0.7, 0.2, 0.1]))
    else:
        n_hyp = 2 + int(rng.choice(2, p=[0.6, 0.4]))
    for _ in range(n_hyp - 1):
        cand = _confuse(true_act, domain, rng)
        if not top_correct and rng.random() < 0.7:
            cand = true_act  # the truth often survives lower in the list
        if cand not in hyps:
            hyps.append(cand)
    confs = np.sort(rng.dirichlet(np.ones(len(hyps))))[::-1]
    confs = confs / confs.sum()
    return NBestList(tuple(zip(hyps, (float(c) for c in confs))))


# ---------------------------------------------------------------------------
# Environment

def entity_database(domain: DomainSpec) -> np.ndarray:
    """The domain's entity table (rows of bucket values per slot).

    Seeded from the domain sizes alone, so every environment instance of a
    domain sees the same database regardless of run seed.
    """
    rng = np.random.default_rng([0xD1A1, domain.n_constraint_slots,
                                 domain.n_requests, *domain.slot_buckets])
    return np.stack([
        np.array([rng.integers(b) for b in domain.slot_buckets])
        for _ in range(domain.n_entities)
    ])


class DialogueEnv:
    """One slot-filling dialogue at a time.

    ``reset`` draws a satisfiable user goal from the domain's entity
    database; ``step`` executes one machine act, simulates the user's
    response, pushes it through the SER channel and updates the belief.
    """

    def __init__(self, domain: DomainSpec, ser: float,
                 rng: np.random.Generator, patience: int = DEFAULT_PATIENCE,
                 volunteer_prob: float = 0.9, max_wrong_offers: int | None = None,
                 confirm_noise: float = 1.0, correction_noise: float = 0.0,
                 yes_confusion: float = 0.75, boredom: float = 0.10,
                 boredom_start: int = 10, trace=None):
        if not 0.0 <= ser < 1.0:
            raise ValueError("ser must be in [0, 1)")
        self.domain = domain
        self.ser = ser
        self.rng = rng
        self.patience = patience
        self.volunteer_prob = volunteer_prob
        self.max_wrong_offers = (domain.wrong_offer_tolerance
                                 if max_wrong_offers is None else max_wrong_offers)
        self.confirm_noise = confirm_noise
        self.correction_noise = correction_noise
        self.yes_confusion = yes_confusion
        self.boredom = boredom
        self.boredom_start = boredom_start
        self.trace = trace  # optional callable(dict) per turn
        self.entities = entity_database(domain)
        self._done = True

    def reset(self) -> BeliefState:
        dom, rng = self.domain, self.rng
        entity = self.entities[int(rng.integers(dom.n_entities))]
        n_req = int(rng.integers(1, min(3, dom.n_requests) + 1))
        requests = set(int(r) for r in
                       rng.choice(dom.n_requests, size=n_req, replace=False))
        self.goal = UserGoal(
            constraints={i: int(entity[i]) for i in range(dom.n_constraint_slots)},
            requests=requests, patience=self.patience)
        self.belief = BeliefState(dom)
        self._told = set()
        self._informed_ok = False
        self._voiced = []            # requests voiced so far, in order
        self._pending = set()        # voiced but unanswered
        self._answered = set()
        self._unhelpful_streak = 0
        self._wrong_offers = 0
        self._done = False
        self._success = False
        return self.belief

    @property
    def done(self):
        return self._done

    @property
    def success(self):
        return self._success

    def _believed_matches_goal(self):
        for slot, value in self.goal.constraints.items():
            d = self.belief.slot_dists[slot]
            if int(np.argmax(d)) != value:  # "unknown" bucket can win too
                return False
        return True

    def step(self, action: int):
        """Returns (belief, reward, done, success)."""
        if self._done:
            raise RuntimeError("step called on a finished episode")
        dom = self.domain
        kind, slot = decode_act(dom, action)
        self.belief.turn += 1
        self.belief.last_act = action

        user_acts = []  # (UserAct, noise factor or None for the full SER)
        unhelpful = False

        if kind == "request":
            if slot in self._told:
                unhelpful = True
            user_acts.append((UserAct(U_INFORM, slot=slot,
                                      value=self.goal.constraints[slot]), None))
            self._told.add(slot)
            self._maybe_volunteer(user_acts)
        elif kind == "confirm":
            # user affirms or corrects; either way the slot value is restated
            bucket, _ = self.belief.top_value(slot)
            if (bucket >= 0 and bucket != self.goal.constraints[slot]
                    and self.rng.random() < self.ser * self.yes_confusion):
                # "no, it's Y" misheard as a curt "yes": the system's own
                # wrong hypothesis comes back affirmed with high confidence
                user_acts.append((UserAct(U_INFORM, slot=slot, value=bucket),
                                  AFFIRMED))
            else:
                user_acts.append((UserAct(U_INFORM, slot=slot,
                                          value=self.goal.constraints[slot]),
                                  self.confirm_noise))
            self._told.add(slot)
        elif kind == ACT_INFORM:
            if self._believed_matches_goal():
                self._informed_ok = True
                self._answered |= self._pending
                self._pending.clear()
                self.belief.request_flags[:] = 0.0
                remaining = sorted(self.goal.requests - self._answered
                                   - set(self._voiced))
                if remaining:
                    req = remaining[0]
                    self._voiced.append(req)
                    self._pending.add(req)
                    user_acts.append((UserAct(U_REQUEST, request=req), None))
                elif self.goal.requests <= self._answered:
                    self._done = True
                    self._success = True
                    user_acts.append((UserAct(U_BYE), None))
            else:
                # a wrong offer; the user tolerates only so many before
                # hanging up, and meanwhile re-asserts the first constraint
                # the system got wrong
                self._wrong_offers += 1
                if self._wrong_offers >= self.max_wrong_offers:
                    self._done = True
                else:
                    # the user restates the first constraint the offer got
                    # wrong, deliberately, through the clearer clarification
                    # channel
                    for s, v in sorted(self.goal.constraints.items()):
                        if int(np.argmax(self.belief.slot_dists[s])) != v:
                            user_acts.append(
                                (UserAct(U_INFORM, slot=s, value=v),
                                 self.correction_noise))
                            self._told.add(s)
                            break
        elif kind == ACT_REPEAT:
            unhelpful = True
        elif kind == ACT_BYE:
            self._done = True
            self._success = (self._informed_ok
                             and self.goal.requests <= self._answered)

        self._unhelpful_streak = self._unhelpful_streak + 1 if unhelpful else 0
        if not self._done and self._unhelpful_streak >= self.goal.patience:
            self._done = True  # user hangs up
        if (not self._done and self.belief.turn > self.boredom_start
                and self.rng.random() < self.boredom):
            self._done = True  # the user gives up on a dialogue that drags on
        if not self._done and self.belief.turn >= MAX_TURNS:
            self._done = True

        observations = []
        if not self._done:
            for act, noise in user_acts:
                if act.kind == U_NULL:
                    continue
                if noise is AFFIRMED:
                    obs = NBestList(((act, AFFIRMED_CONFIDENCE),
                                     (UserAct(U_NULL),
                                      1.0 - AFFIRMED_CONFIDENCE)))
                elif noise is not None:
                    obs = self._clarify_observation(act, noise)
                else:
                    obs = corrupt_user_act(act, self.ser, dom, self.rng)
                observations.append(obs)
                self.belief = update_belief(self.belief, obs)

        reward = -1.0 + (20.0 if self._done and self._success else 0.0)
        if self.trace is not None:
            self.trace({
                "turn": self.belief.turn,
                "machine_act": int(action),
                "user_acts": [a.kind for a, _ in user_acts],
                "n_best": [[[a.kind, a.slot, a.value, a.request, c]
                            for a, c in obs.hypotheses]
                           for obs in observations],
                "reward": reward,
                "done": self._done,
                "success": self._success,
            })
        return self.belief, reward, self._done, self._success

    def _clarify_observation(self, act: UserAct, noise: float) -> NBestList:
        """Clarifications (answers to explicit confirmations, corrections
        after a rejected offer) are short, deliberate utterances: the error
        rate is scaled by ``noise`` and a correctly recognized answer is
        unambiguous."""
        obs = corrupt_user_act(act, self.ser * noise, self.domain, self.rng)
        if obs.top == act:
            return NBestList(((act, 1.0),))
        return obs

    def _maybe_volunteer(self, user_acts, limit=3, noise=None):
        """Agenda-style initiative: alongside an answer the user may state
        up to ``limit`` more constraints the system has not asked about."""
        for _ in range(limit):
            untold = sorted(set(self.goal.constraints) - self._told)
            if not untold or self.rng.random() >= self.volunteer_prob:
                return
            slot = untold[int(self.rng.integers(len(untold)))]
            user_acts.append((UserAct(U_INFORM, slot=slot,
                                      value=self.goal.constraints[slot]),
                              noise))
            self._told.add(slot)
