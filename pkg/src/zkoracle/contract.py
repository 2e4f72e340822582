"""Deterministic emulation of the on-chain oracle contract.

One transaction mutates state at a time, blockchain-style.  Every state
change appends an event carrying enough payload to replay it, so replaying
the log from genesis reconstructs the full contract state; off-chain nodes
sync their local trees from the same records.

The contract keeps a private hash tree (as the real contract does for the
membership operations) but external state changes arriving via submit/slash
are accepted only if the claimed post root matches the canonical update
implied by the public inputs; that is what keeps the event log replayable.
"""

from dataclasses import dataclass, replace
from typing import Optional

from . import circuits, curve
from .circuits import (AGGREGATION, SLASH, AggregationPublic, Proof, SlashPublic,
                       TransparentBackend)
from .curve import Point
from .errors import (AlreadyExiting, AlreadySlashed, CommitteeFull, CorruptLog,
                     ExitTimeNotReached, FeeTooLow, InsufficientStake, InvalidInput,
                     InvalidProof, NoCommittee, NotAggregator, NotExiting, NotOwner,
                     RequestNotPending, RequestPending, StakeTooLow)
from .merkle import (Account, MerkleProof, StateTree, empty_account, leaf_hash,
                     proof_index, verify_proof)
from .mimc import mimc_hash

EXIT_DELAY = 7 * 24 * 3600  # two-step departure: announce, then wait this long

MAX_BALANCE = 1 << 128  # balances stay far below P so additions never wrap

ROUND_ROBIN = "round_robin"
RANDOMIZED = "randomized"

PENDING = "pending"
ANSWERED = "answered"


@dataclass(frozen=True)
class Params:
    depth: int = 8
    min_stake: int = 100
    val_reward: int = 10
    agg_reward: int = 50
    exit_delay: int = EXIT_DELAY
    aggregator_mode: str = ROUND_ROBIN

    @property
    def capacity(self) -> int:
        return 1 << self.depth

    @property
    def threshold(self) -> int:
        return circuits.threshold(self.depth)

    @property
    def request_fee(self) -> int:
        return self.agg_reward + self.threshold * self.val_reward


@dataclass
class Request:
    id: int
    block_number: int
    fee: int
    client: str
    status: str = PENDING
    answer_hash: Optional[int] = None
    validator_bits: Optional[int] = None


@dataclass(frozen=True)
class Event:
    seq: int
    time: float
    kind: str
    payload: dict


REGISTERED = "Registered"
REPLACED = "Replaced"
EXITED = "Exited"
WITHDRAWN = "Withdrawn"
BLOCK_REQUESTED = "BlockRequested"
BLOCK_SUBMITTED = "BlockSubmitted"
SLASHED = "Slashed"
AGGREGATOR_TIMEOUT = "AggregatorTimeout"

EVENT_KINDS = (REGISTERED, REPLACED, EXITED, WITHDRAWN, BLOCK_REQUESTED,
               BLOCK_SUBMITTED, SLASHED, AGGREGATOR_TIMEOUT)


class Contract:
    def __init__(self, params: Params = Params(), backend=None):
        self.params = params
        self.backend = backend or TransparentBackend(params.agg_reward, params.val_reward)
        self._tree = StateTree(params.depth)
        self.owner_of = {}
        self.ip_of = {}
        self.exit_time_of = {}
        self.requests = {}
        self.next_request_id = 0
        self.aggregator_cursor = 0
        self.escrow = 0
        self.slashed = set()
        self.events = []
        self.now = 0.0
        # randomized rotation state: current seed point and timeouts since last submit
        self.seed_point = curve.GENERATOR
        self.timeout_count = 0

    # -- read side ------------------------------------------------------

    @property
    def state_root(self) -> int:
        return self._tree.root

    def account(self, index: int) -> Account:
        return self._tree.account(index)

    def prove(self, index: int) -> MerkleProof:
        return self._tree.prove(index)

    def tree_snapshot(self) -> StateTree:
        return self._tree.copy()

    def occupied_indices(self):
        return self._tree.occupied_indices()

    def total_staked(self) -> int:
        return sum(self._tree.account(i).balance for i in self._tree.occupied_indices())

    def get_aggregator(self) -> int:
        start = self._rotation_start()
        n = self.params.capacity
        for k in range(n):
            idx = (start + k) % n
            if not self._tree.account(idx).is_empty():
                return idx
        raise NoCommittee("no registered oracle nodes")

    def _rotation_start(self) -> int:
        if self.params.aggregator_mode == RANDOMIZED:
            return mimc_hash([self.seed_point.x, self.timeout_count]) % self.params.capacity
        return self.aggregator_cursor

    # -- time -----------------------------------------------------------

    def set_time(self, t: float) -> None:
        if t < self.now:
            raise InvalidInput("time cannot move backwards")
        self.now = t

    # -- membership transactions -----------------------------------------

    def register(self, caller: str, pubkey: Point, ip: str, stake: int) -> int:
        if stake < self.params.min_stake:
            raise InsufficientStake(f"stake {stake} below minimum {self.params.min_stake}")
        self._check_stake_bound(stake)
        curve.require_on_curve(pubkey)
        index = self._lowest_empty_index()
        if index is None:
            raise CommitteeFull("all leaves occupied; a newcomer must replace")
        self._tree.set_account(index, Account(index, pubkey, stake))
        self.owner_of[index] = caller
        self.ip_of[index] = ip
        self._emit(REGISTERED, index=index, owner=caller, ip=ip,
                   pubkey_x=pubkey.x, pubkey_y=pubkey.y, stake=stake)
        return index

    def replace(self, caller: str, pubkey: Point, ip: str, stake: int,
                target_index: int, target_account: Account, proof: MerkleProof) -> int:
        self._check_stake_bound(stake)
        curve.require_on_curve(pubkey)
        self._check_account_proof(target_index, target_account, proof)
        if stake <= target_account.balance:
            raise StakeTooLow(f"stake {stake} must exceed target balance "
                              f"{target_account.balance}")
        displaced_owner = self.owner_of.get(target_index, "")
        returned = target_account.balance
        self._tree.set_account(target_index, Account(target_index, pubkey, stake))
        self.owner_of[target_index] = caller
        self.ip_of[target_index] = ip
        self.exit_time_of.pop(target_index, None)
        self._emit(REPLACED, index=target_index, owner=caller, ip=ip,
                   pubkey_x=pubkey.x, pubkey_y=pubkey.y, stake=stake,
                   displaced_owner=displaced_owner, returned=returned)
        return target_index

    def exit(self, caller: str, account: Account, proof: MerkleProof) -> float:
        index = account.index
        if self.owner_of.get(index) != caller:
            raise NotOwner(f"{caller} does not own index {index}")
        if index in self.exit_time_of:
            raise AlreadyExiting(f"index {index} already announced an exit")
        self._check_account_proof(index, account, proof)
        exit_time = self.now + self.params.exit_delay
        self.exit_time_of[index] = exit_time
        self._emit(EXITED, index=index, exit_time=exit_time)
        return exit_time

    def withdraw(self, caller: str, account: Account, proof: MerkleProof) -> int:
        index = account.index
        if index not in self.exit_time_of:
            raise NotExiting(f"index {index} never announced an exit")
        if self.owner_of.get(index) != caller:
            raise NotOwner(f"{caller} does not own index {index}")
        if self.now < self.exit_time_of[index]:
            raise ExitTimeNotReached(
                f"now {self.now} before exit time {self.exit_time_of[index]}")
        self._check_account_proof(index, account, proof)
        amount = account.balance
        self._tree.set_account(index, empty_account(index))
        self.owner_of.pop(index)
        self.ip_of.pop(index)
        self.exit_time_of.pop(index)
        self._emit(WITHDRAWN, index=index, owner=caller, amount=amount)
        return amount

    # -- request lifecycle -------------------------------------------------

    def request_block(self, client: str, block_number: int, fee: int) -> int:
        if fee < self.params.request_fee:
            raise FeeTooLow(f"fee {fee} below required {self.params.request_fee}")
        request_id = self.next_request_id
        self.next_request_id += 1
        self.requests[request_id] = Request(request_id, block_number, fee, client)
        self.escrow += fee
        self._emit(BLOCK_REQUESTED, request_id=request_id, block_number=block_number,
                   fee=fee, client=client)
        return request_id

    def submit_block(self, caller: str, request_id: int, block_hash: int,
                     validator_bits: int, post_state_root: int, proof: Proof,
                     next_seed: Optional[Point] = None) -> None:
        agg_index = self.get_aggregator()
        if self.owner_of.get(agg_index) != caller:
            raise NotAggregator(f"{caller} is not the current aggregator")
        request = self.requests.get(request_id)
        if request is None or request.status != PENDING:
            raise RequestNotPending(f"request {request_id} is not pending")
        if self.params.aggregator_mode == RANDOMIZED and next_seed is None:
            raise InvalidProof("randomized rotation requires the next seed point")

        public = AggregationPublic(self.state_root, post_state_root, block_hash,
                                   request_id, validator_bits,
                                   seed=self._public_seed(), next_seed=next_seed)
        if not self.backend.verify(AGGREGATION, public, proof):
            raise InvalidProof("aggregation proof rejected")

        rewards = self.params.agg_reward + self.params.threshold * self.params.val_reward
        if self.escrow < rewards:
            raise InvalidInput("escrow cannot cover the submission rewards")

        self._apply_rewards(agg_index, validator_bits, post_state_root)
        self.escrow -= rewards
        request.status = ANSWERED
        request.answer_hash = block_hash
        request.validator_bits = validator_bits
        self.aggregator_cursor = (agg_index + 1) % self.params.capacity
        payload = dict(request_id=request_id, agg_index=agg_index,
                       block_hash=block_hash, validator_bits=validator_bits,
                       post_state_root=post_state_root)
        if self.params.aggregator_mode == RANDOMIZED:
            self.seed_point = next_seed
            self.timeout_count = 0
            payload.update(seed_x=next_seed.x, seed_y=next_seed.y)
        self._emit(BLOCK_SUBMITTED, **payload)

    def slash(self, caller: str, request_id: int, agg_index: int, val_index: int,
              post_state_root: int, proof: Proof) -> None:
        request = self.requests.get(request_id)
        if request is None or request.status != ANSWERED:
            raise RequestPending(f"request {request_id} has not been answered")
        if (request_id, val_index) in self.slashed:
            raise AlreadySlashed(f"validator {val_index} already slashed for "
                                 f"request {request_id}")
        public = SlashPublic(self.state_root, post_state_root, request.answer_hash,
                             request_id, agg_index, val_index)
        if not self.backend.verify(SLASH, public, proof):
            raise InvalidProof("slash proof rejected")
        self._apply_slash(agg_index, val_index, post_state_root)
        self.slashed.add((request_id, val_index))
        self._emit(SLASHED, request_id=request_id, agg_index=agg_index,
                   val_index=val_index, post_state_root=post_state_root)

    def timeout_aggregator(self) -> int:
        """Rotate past an unresponsive aggregator; driven by the network layer."""
        skipped = self.get_aggregator()
        self.aggregator_cursor = (skipped + 1) % self.params.capacity
        if self.params.aggregator_mode == RANDOMIZED:
            self.timeout_count += 1
        self._emit(AGGREGATOR_TIMEOUT, index=skipped)
        return skipped

    # -- internals ---------------------------------------------------------

    def _public_seed(self) -> Optional[Point]:
        if self.params.aggregator_mode == RANDOMIZED:
            return self.seed_point
        return None

    def _lowest_empty_index(self) -> Optional[int]:
        for i in range(self.params.capacity):
            if self._tree.account(i).is_empty():
                return i
        return None

    def _check_stake_bound(self, stake: int) -> None:
        if not 0 <= stake < MAX_BALANCE:
            raise InvalidInput(f"stake {stake} outside [0, 2^128)")

    def _check_account_proof(self, index: int, account: Account,
                             proof: MerkleProof) -> None:
        if (account.index != index or proof_index(proof) != index
                or proof.leaf != leaf_hash(account)
                or len(proof.path) != self.params.depth
                or not verify_proof(self.state_root, proof)):
            raise InvalidProof(f"account proof for index {index} does not match "
                               "the current state root")

    def _apply_rewards(self, agg_index: int, validator_bits: int,
                       post_state_root: int) -> None:
        touched = apply_reward_updates(self._tree, agg_index, validator_bits,
                                       self.params.agg_reward, self.params.val_reward)
        if self._tree.root != post_state_root:
            for idx, account in reversed(touched):
                self._tree.set_account(idx, account)
            raise InvalidProof("post state root does not match the canonical "
                               "reward update")

    def _apply_slash(self, agg_index: int, val_index: int,
                     post_state_root: int) -> None:
        touched = apply_slash_transfer(self._tree, agg_index, val_index)
        if self._tree.root != post_state_root:
            for idx, account in reversed(touched):
                self._tree.set_account(idx, account)
            raise InvalidProof("post state root does not match the canonical "
                               "slash transfer")

    def _emit(self, kind: str, **payload) -> None:
        self.events.append(Event(len(self.events), self.now, kind, payload))


# -- shared tree updates (contract, replay, node sync) -----------------------


def apply_reward_updates(tree: StateTree, agg_index: int, validator_bits: int,
                         agg_reward: int, val_reward: int):
    """Credit the aggregator then each flagged validator; returns the accounts
    as they were, for rollback."""
    touched = []
    agg = tree.account(agg_index)
    touched.append((agg_index, agg))
    tree.set_account(agg_index, replace(agg, balance=agg.balance + agg_reward))
    bits = validator_bits
    index = 0
    while bits:
        if bits & 1:
            account = tree.account(index)
            touched.append((index, account))
            tree.set_account(index, replace(account, balance=account.balance + val_reward))
        bits >>= 1
        index += 1
    return touched


def apply_slash_transfer(tree: StateTree, agg_index: int, val_index: int):
    """Move the victim's whole balance to the aggregator; returns rollback info."""
    victim = tree.account(val_index)
    agg = tree.account(agg_index)
    touched = [(val_index, victim), (agg_index, agg)]
    tree.set_account(val_index, replace(victim, balance=0))
    agg = tree.account(agg_index)
    tree.set_account(agg_index, replace(agg, balance=agg.balance + victim.balance))
    return touched


def apply_event_to_tree(tree: StateTree, event: Event,
                        agg_reward: int, val_reward: int) -> None:
    """Account-state effect of one event; used by replay and node sync."""
    p = event.payload
    if event.kind == REGISTERED or event.kind == REPLACED:
        tree.set_account(p["index"], Account(p["index"],
                                             Point(p["pubkey_x"], p["pubkey_y"]),
                                             p["stake"]))
    elif event.kind == WITHDRAWN:
        tree.set_account(p["index"], empty_account(p["index"]))
    elif event.kind == BLOCK_SUBMITTED:
        apply_reward_updates(tree, p["agg_index"], p["validator_bits"],
                             agg_reward, val_reward)
    elif event.kind == SLASHED:
        apply_slash_transfer(tree, p["agg_index"], p["val_index"])


def replay(events, params: Params = Params()) -> Contract:
    """Rebuild a contract from its event log; raises CorruptLog on seq gaps or
    roots that do not reproduce."""
    contract = Contract(params)
    for position, event in enumerate(events):
        if event.seq != position:
            raise CorruptLog(f"expected seq {position}, found {event.seq}")
        if event.kind not in EVENT_KINDS:
            raise CorruptLog(f"unknown event kind {event.kind!r}")
        if event.time < contract.now:
            raise CorruptLog("event time moves backwards")
        contract.now = event.time
        p = event.payload
        kind = event.kind
        if kind in (REGISTERED, REPLACED, WITHDRAWN, BLOCK_SUBMITTED, SLASHED):
            apply_event_to_tree(contract._tree, event, params.agg_reward,
                                params.val_reward)
        if kind == REGISTERED or kind == REPLACED:
            contract.owner_of[p["index"]] = p["owner"]
            contract.ip_of[p["index"]] = p["ip"]
            contract.exit_time_of.pop(p["index"], None)
        elif kind == EXITED:
            contract.exit_time_of[p["index"]] = p["exit_time"]
        elif kind == WITHDRAWN:
            contract.owner_of.pop(p["index"], None)
            contract.ip_of.pop(p["index"], None)
            contract.exit_time_of.pop(p["index"], None)
        elif kind == BLOCK_REQUESTED:
            contract.requests[p["request_id"]] = Request(
                p["request_id"], p["block_number"], p["fee"], p["client"])
            contract.next_request_id = p["request_id"] + 1
            contract.escrow += p["fee"]
        elif kind == BLOCK_SUBMITTED:
            request = contract.requests[p["request_id"]]
            request.status = ANSWERED
            request.answer_hash = p["block_hash"]
            request.validator_bits = p["validator_bits"]
            contract.escrow -= (params.agg_reward
                                + params.threshold * params.val_reward)
            contract.aggregator_cursor = (p["agg_index"] + 1) % params.capacity
            if params.aggregator_mode == RANDOMIZED:
                contract.seed_point = Point(p["seed_x"], p["seed_y"])
                contract.timeout_count = 0
            if contract.state_root != p["post_state_root"]:
                raise CorruptLog(f"event {event.seq}: replayed root diverges")
        elif kind == SLASHED:
            contract.slashed.add((p["request_id"], p["val_index"]))
            if contract.state_root != p["post_state_root"]:
                raise CorruptLog(f"event {event.seq}: replayed root diverges")
        elif kind == AGGREGATOR_TIMEOUT:
            contract.aggregator_cursor = (p["index"] + 1) % params.capacity
            if params.aggregator_mode == RANDOMIZED:
                contract.timeout_count += 1
        contract.events.append(event)
    return contract


# -- event log text format ----------------------------------------------------


def dump_events(events) -> str:
    """Line per event: seq kind time key=value..., keys sorted, decimal ints."""
    lines = []
    for e in events:
        parts = [str(e.seq), e.kind, repr(e.time)]
        for key in sorted(e.payload):
            parts.append(f"{key}={e.payload[key]}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def dump_log(contract: Contract) -> str:
    """Event log with a leading '# params' line so replay is self-contained."""
    p = contract.params
    header = (f"# params depth={p.depth} min_stake={p.min_stake} "
              f"val_reward={p.val_reward} agg_reward={p.agg_reward} "
              f"exit_delay={p.exit_delay} aggregator_mode={p.aggregator_mode}")
    return header + "\n" + dump_events(contract.events)


def parse_log(text: str):
    """Inverse of dump_log: returns (params, events)."""
    params = Params()
    lines = text.splitlines()
    if lines and lines[0].startswith("# params "):
        fields = {}
        for item in lines[0][len("# params "):].split(" "):
            key, _, raw = item.partition("=")
            fields[key] = _parse_value(raw)
        try:
            params = Params(**fields)
        except TypeError as exc:
            raise CorruptLog(f"bad params header: {exc}") from None
        lines = lines[1:]
    return params, parse_events("\n".join(lines))


def _parse_value(raw: str):
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_events(text: str):
    events = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split(" ")
        if len(parts) < 3:
            raise CorruptLog(f"line {lineno}: too few fields")
        try:
            seq = int(parts[0])
            time = float(parts[2])
        except ValueError as exc:
            raise CorruptLog(f"line {lineno}: {exc}") from None
        payload = {}
        for item in parts[3:]:
            key, _, raw = item.partition("=")
            if not key or not raw and "=" not in item:
                raise CorruptLog(f"line {lineno}: malformed payload field {item!r}")
            payload[key] = _parse_value(raw)
        events.append(Event(seq, time, parts[1], payload))
    return events
