from pathlib import Path

import pytest

from drac.pricing import load_price_book
from drac.spec import load_architecture

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "drac" / "fixtures"
SPEC_FILE = FIXTURES / "design_center.drac"
PRICES_FILE = FIXTURES / "pricebook.csv"
SCENARIOS = FIXTURES / "scenarios"
FIVE = ["s1_in_stock_purchase", "s2_quotes", "s3_custom_order", "s4_measure_install", "s5_return"]


@pytest.fixture(scope="session")
def spec():
    return load_architecture(SPEC_FILE)


@pytest.fixture(scope="session")
def book():
    return load_price_book(PRICES_FILE)


def _header(sid, order, select, customer='customer "Pat Doe" phone "5127238445" install-at "1 Oak St"'):
    return [f'scenario {sid} "adversarial"', f"  {customer}", f"  {order}", f'  select "{select}"',
            "  window 30 30 30 60 60 60", "  controls left right",
            '  stimulus 0 Customer event "Customer Approached"',
            '  stimulus 0 Designer data "Customer Information"']


def adversarial_scripts():
    """(family, text) pairs; every one must show a blocked contract in its trace."""
    out = []
    n = 0
    for sku, kind in (("BALI-1AL", "in_stock"), ("HD-FW", "special")):
        for at in (0, 1, 50, 200, 400):
            for cashier in (None, 0, at + 1):
                n += 1
                lines = _header(f"P{n}", f'order "P-{n:03d}" {kind}', sku)
                lines.append(f'  invoke {at} Customer "Pay Cashier"')
                if cashier is not None:
                    lines.append(f'  stimulus {max(cashier, at)} Customer event "Customer Approaches cashier"')
                out.append(("pay_without_invoice", "\n".join(lines) + "\n"))
    for sku, kind in (("BALI-1AL", "in_stock"), ("HD-FW", "special"), ("HD-RW", "special")):
        for avail in (700, 900, 5000):
            for forced in (None, 1, avail + 10):
                n += 1
                lines = _header(f"I{n}", f'order "I-{n:03d}" {kind} install', sku)
                lines += ['  stimulus 5 Designer data "Measurements"',
                          '  stimulus 5 Designer event "Measurements recorded"',
                          '  stimulus 600 Customer event "Customer Approaches cashier"',
                          f'  stimulus {avail} Measurer event "Availability confirmed"']
                if forced is not None:
                    lines.append(f'  invoke {forced} Installer "Arrive at site and install products"')
                lines.sort(key=lambda l: int(l.split()[1]) if l.split()[0] in ("stimulus", "invoke") else -1)
                out.append(("install_without_hd_measure", "\n".join(lines) + "\n"))
    return out


def random_orders(n, seed):
    import random

    from drac.domain import CustomerInfo
    from drac.lifecycle import STATES, OrderLine, OrderRecord

    rng = random.Random(seed)
    phones = [f"512555{k:04d}" for k in range(n // 4 + 1)]
    words = ["Pat", "Doe", "Ana", "Lee", "O'Neil", "Zoë", "Ruiz", "\t", "東京"]
    orders = []
    for i in range(n):
        lines = tuple(OrderLine(rng.choice(["BALI-1AL", "HD-FW", "LEV-FW"]), rng.randrange(8, 800),
                                rng.randrange(8, 800), rng.randrange(0, 10**6), rng.choice(["", "left", "right"]))
                      for _ in range(rng.randrange(0, 4)))
        hist = tuple((rng.choice(STATES), t) for t in sorted(rng.sample(range(10**6), rng.randrange(1, 5))))
        orders.append(OrderRecord(
            f"O-{i:05d}", CustomerInfo(" ".join(rng.sample(words, 2)), rng.choice(phones),
                                       rng.choice(["", "12 Elm St"]), rng.choice(["", "9 Pine Rd"])),
            lines, hist[-1][0], rng.random() < 0.5, rng.random() < 0.5, rng.random() < 0.5,
            rng.random() < 0.5, rng.random() < 0.2, hist, hist[0][1],
            {"note": rng.choice(["", "rush", "ünï"]), "n": rng.randrange(100)}))
    return orders


def adversarial_violated(family, report) -> bool:
    """True when the trace shows the contract held against the bad input."""
    viol = [e for e in report.trace if e.kind == "contract_violation"]
    if family == "pay_without_invoice":
        first_invoice = next((i for i, e in enumerate(report.trace)
                              if e.kind == "data_written" and e.subject == "Invoice"), len(report.trace))
        early_pay = any(e.subject == "Payment for Invoice made" for e in report.trace[:first_invoice])
        return any(e.subject == "Pay Cashier" for e in viol) and not early_pay
    installed = any(e.subject == "Products Installed" for e in report.trace)
    return (any(e.subject == "Arrive at site and install products" for e in viol)
            and not installed and report.terminal_state != "installed")
