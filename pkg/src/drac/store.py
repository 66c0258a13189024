"""Append-only order store keyed by customer phone. One checksummed JSON record per line."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict
from pathlib import Path
from typing import Optional

from drac.domain import CustomerInfo
from drac.errors import DracError
from drac.lifecycle import OrderLine, OrderRecord


class CorruptStore(DracError):
    def __init__(self, path, line: int, offset: int, reason: str):
        super().__init__(f"{path}:{line}: corrupt record at byte {offset}: {reason}")
        self.line = line
        self.offset = offset


def order_to_dict(order: OrderRecord) -> dict:
    return asdict(order)


def order_from_dict(d: dict) -> OrderRecord:
    d = dict(d)
    d["customer"] = CustomerInfo(**d["customer"])
    d["lines"] = tuple(OrderLine(**l) for l in d["lines"])
    d["history"] = tuple((s, t) for s, t in d["history"])
    return OrderRecord(**d)


def encode_line(record: dict) -> bytes:
    body = json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return b"%08x\t" % zlib.crc32(body) + body + b"\n"


class RecordingStore:
    """Every store_order call appends a version; the latest version of an order id wins."""

    def __init__(self, path):
        self.path = Path(path)
        self._orders: dict[str, OrderRecord] = {}
        self._seq: dict[str, int] = {}
        self._by_phone: dict[str, list[str]] = {}
        self._count = 0
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        offset = 0
        with self.path.open("rb") as fh:
            for n, raw in enumerate(fh, start=1):
                if not raw.endswith(b"\n"):
                    raise CorruptStore(self.path, n, offset, "truncated record")
                crc, tab, body = raw[:-1].partition(b"\t")
                try:
                    if not tab or int(crc, 16) != zlib.crc32(body) or len(crc) != 8:
                        raise ValueError("checksum mismatch")
                    order = order_from_dict(json.loads(body.decode("utf-8")))
                except (ValueError, KeyError, TypeError) as exc:
                    raise CorruptStore(self.path, n, offset, str(exc)) from None
                self._index(order)
                offset += len(raw)

    def _index(self, order: OrderRecord) -> None:
        self._count += 1
        if order.id not in self._orders:
            self._by_phone.setdefault(order.customer.phone, []).append(order.id)
        self._orders[order.id] = order
        self._seq[order.id] = self._count

    def store_order(self, order: OrderRecord) -> None:
        prev = self._orders.get(order.id)
        if prev is not None and prev.customer.phone != order.customer.phone:
            raise ValueError(f"order {order.id} cannot change phone number")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("ab") as fh:
            fh.write(encode_line(order_to_dict(order)))
        self._index(order)

    def find_by_phone(self, phone: str) -> list[OrderRecord]:
        """All orders for ``phone``, most recently created first."""
        if not phone:
            raise ValueError("phone must be non-empty")
        ids = self._by_phone.get(phone, [])
        orders = [self._orders[i] for i in ids]
        return sorted(orders, key=lambda o: (o.created_at, ids.index(o.id)), reverse=True)

    def get(self, order_id: str) -> Optional[OrderRecord]:
        return self._orders.get(order_id)

    def orders(self) -> list[OrderRecord]:
        return list(self._orders.values())
