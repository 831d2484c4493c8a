# SPDX-License-Identifier: BSD-3-Clause
# Copyright (c) 2026 CPPDD contributors
"""Authenticated point-to-point channels and the append-only bulletin board."""

import logging
from collections import defaultdict
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from typing import Any

from ..protocol.core import AuthenticationError, mac_tag, mac_verify, node_name
from ..protocol.wire import Message, MessageKind, WireFormatError, frame, parse_frame

logger = logging.getLogger(__name__)


class Endpoint:
    """A node's side of its channels.

    Outgoing frames carry a per-sender sequence number under the MAC. Incoming
    frames are accepted only if the tag verifies and the sequence number is
    larger than every one accepted before from that sender.

    Parameters
    ----------
    node:
        Node id of the owner.
    keys:
        Channel key shared with each peer, keyed by the peer's node id.
    """

    def __init__(self, node: int, keys: Mapping[int, bytes]) -> None:
        self.node = node
        self._keys = dict(keys)
        self._next_seq = 1
        self._last_seen: dict[int, int] = defaultdict(int)

    @property
    def last_seq(self) -> int:
        return self._next_seq - 1

    def seal(self, kind: MessageKind, receiver: int, round: int, body: bytes) -> bytes:
        if receiver not in self._keys:
            raise AuthenticationError(
                f"{node_name(self.node)} shares no key with {node_name(receiver)}"
            )
        message = Message(kind, self.node, receiver, self._next_seq, round, body)
        self._next_seq += 1
        tag = mac_tag(self._keys[receiver], self.node, message.seq, message.canonical())
        return frame(message, tag)

    def open(self, data: bytes) -> Message:
        """Verify a frame and return its message.

        Raises
        ------
        AuthenticationError
            If the frame is malformed, not addressed to this node, carries an
            invalid tag or replays an old sequence number.
        """
        try:
            message, tag = parse_frame(data)
        except WireFormatError as err:
            raise AuthenticationError(f"Malformed frame: {err}") from err
        if message.receiver != self.node:
            raise AuthenticationError(
                f"Frame for {node_name(message.receiver)} "
                f"delivered to {node_name(self.node)}"
            )
        key = self._keys.get(message.sender)
        if key is None:
            raise AuthenticationError(f"No channel with {node_name(message.sender)}")
        mac_verify(key, message.sender, message.seq, message.canonical(), tag)
        if message.seq <= self._last_seen[message.sender]:
            raise AuthenticationError(
                f"Replayed message {message.seq} from {node_name(message.sender)}"
            )
        self._last_seen[message.sender] = message.seq
        return message


@dataclass(frozen=True)
class BoardRecord:
    round: int
    author: int
    entry: Any


class BulletinBoard:
    """Append-only public log of ``(round, author, entry)`` records."""

    def __init__(self) -> None:
        self._records: list[BoardRecord] = []

    def post(self, round: int, author: int, entry: Any) -> BoardRecord:
        record = BoardRecord(round=round, author=author, entry=entry)
        self._records.append(record)
        logger.debug(
            "Board entry %s by %s in round %d",
            type(entry).__name__,
            node_name(author),
            round,
        )
        return record

    @property
    def records(self) -> tuple[BoardRecord, ...]:
        """Consistent snapshot of all records."""
        return tuple(self._records)

    def entries(self, kind: type) -> list[Any]:
        return [r.entry for r in self._records if isinstance(r.entry, kind)]

    def first(self, kind: type) -> Any | None:
        return next(iter(self.entries(kind)), None)

    def __iter__(self) -> Iterator[BoardRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self._records)
