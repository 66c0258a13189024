import json
import subprocess
import sys

import pytest

from drac.cli import main
from drac.domain import CustomerInfo
from drac.engine import TraceEvent
from drac.errors import LoadError
from drac.lifecycle import OrderRecord
from drac.scenario import Clause, compare_trace, load_script, parse_script, run_loaded
from drac.store import CorruptStore, RecordingStore, order_to_dict

from conftest import (PRICES_FILE, SCENARIOS, SPEC_FILE, adversarial_scripts, adversarial_violated,
                      random_orders)

ALL = sorted(p.stem for p in SCENARIOS.glob("*.scn"))


@pytest.fixture(scope="module")
def scripts():
    return {name: load_script(SCENARIOS / f"{name}.scn") for name in ALL}


@pytest.mark.parametrize("name", ALL)
def test_script_matches_baseline(spec, book, scripts, name):
    r = run_loaded(spec, book, scripts[name], 1, loss_prob=0.0)
    assert r.matched, r.first_mismatch
    assert r.audit == []
    assert scripts[name].expected.clauses


def test_in_stock_order(spec, book, scripts):
    r = run_loaded(spec, book, scripts["s1_in_stock_purchase"], 1)
    done = [e.subject for e in r.trace if e.kind == "service_completed"]
    assert done.index("Cut Blinds") < done.index("Pay Cashier")
    assert r.terminal_state == "closed"


def test_custom_order_faxes_three(spec, book, scripts):
    r = run_loaded(spec, book, scripts["s3_custom_order"], 1)
    sent = {e.subject for e in r.trace if e.kind == "message_sent"}
    assert {"vendor", "receiving_dept", "installer"} <= sent
    assert r.terminal_state == "faxed"
    profiles = {e.subject: e.detail for e in r.trace if e.kind == "message_sent"}
    assert "profile=summary" in profiles["receiving_dept"] and "profile=full_detail" in profiles["vendor"]


def test_self_measured_install_blocked(spec, book, scripts):
    r = run_loaded(spec, book, scripts["s4c_self_measured_install"], 1)
    gates = [e for e in r.trace if e.kind == "contract_violation" and e.drac == "Installer"]
    assert gates and "gate=" in gates[0].detail
    assert r.terminal_state != "installed"


def test_hd_measured_install_completes(spec, book, scripts):
    r = run_loaded(spec, book, scripts["s4_measure_install"], 1)
    assert "installed" in [st for st, _ in r.order.history]
    assert r.terminal_state == scripts["s4_measure_install"].expected.terminal
    assert any(e.subject == "Products Installed" for e in r.trace)


def test_returns(spec, book, scripts):
    r = run_loaded(spec, book, scripts["s5_return"], 1)
    assert r.terminal_state == "returned" and r.markdowns[0].disposition == "back_to_shelf"
    r = run_loaded(spec, book, scripts["s5b_special_return"], 1)
    assert r.markdowns[0].disposition == "rtv" and r.order.policy_exception


def _ev(kind, drac, subject, t=0):
    return TraceEvent(t, 0, kind, drac, subject, "")


def test_compare_trace_examples():
    trace = [_ev("service_completed", "A", "s1"), _ev("event_fired", "B", "x"), _ev("service_completed", "A", "s2")]
    assert compare_trace(trace, [Clause("service_completed", "A", "s1"), Clause("service_completed", "A", "s2")]).matched
    assert compare_trace(trace, []).matched
    m = compare_trace(trace, [Clause("service_completed", "A", "s1"), Clause("service_completed", "A", "never")])
    assert not m.matched and m.clause_index == 1 and m.trace_position == 3 and m.searched_from == 1
    m = compare_trace(trace, [Clause("service_completed", "Z", "never")])
    assert m.clause_index == 0 and m.trace_position == 3 and m.searched_from == 0
    assert not compare_trace(trace, [Clause("service_completed", "A", "s2"), Clause("service_completed", "A", "s1")]).matched


def test_mismatch_pointer_reaches_trace_end(spec, book, scripts):
    text = (SCENARIOS / "s1_in_stock_purchase.scn").read_text().replace(
        'expect service Customer "Pay Cashier"', 'expect service Customer "Pay Cashier"\n  expect service Installer "Check delivery of product"')
    r = run_loaded(spec, book, parse_script(text), 1)
    assert not r.matched and "clause 5" in r.first_mismatch
    assert r.match.trace_position == len(r.trace)


def test_vendor_fax_loss_robust(spec, book, scripts):
    script = scripts["s3_custom_order"]
    ok = 0
    for seed in range(500):
        r = run_loaded(spec, book, script, seed, loss_prob=0.3, max_attempts=5)
        ok += any(e.kind == "message_delivered" and e.subject == "vendor" for e in r.trace)
    assert ok / 500 >= 0.99


def test_adversarial_zero_false_negatives(spec, book):
    cases = adversarial_scripts()
    missed = [text.splitlines()[0] for fam, text in cases
              if not adversarial_violated(fam, run_loaded(spec, book, parse_script(text), 1))]
    assert missed == [] and len(cases) > 50


@pytest.mark.parametrize("bad", [
    'scenario 9 "x"\n  order "A" sometimes\n',
    'scenario 9 "x"\n  stimulus later Customer event "E"\n',
    'scenario 9 "x"\n  stimulus 5 Customer event "E"\n  stimulus 1 Customer event "E"\n',
    'scenario 9 "x"\n  frobnicate\n',
    'scenario 9 "x\n',
    'scenario 9 "x"\n  window 30 30\n',
    'scenario 9 "x"\n  expect potato A "b"\n',
])
def test_bad_scripts_raise(bad):
    with pytest.raises(LoadError):
        parse_script(bad)


def test_unknown_drac_in_script(spec, book):
    s = parse_script('scenario 9 "x"\n  customer "A B" phone "1"\n  order "A" in_stock\n'
                     '  stimulus 0 Ghost event "E"\n')
    with pytest.raises(LoadError):
        run_loaded(spec, book, s, 1)


def test_store_examples(tmp_path):
    path = tmp_path / "orders.jsonl"
    store = RecordingStore(path)
    a = OrderRecord("A", CustomerInfo("Pat Doe", "5127238445"), created_at=10)
    b = OrderRecord("B", CustomerInfo("Pat Doe", "5127238445"), created_at=20)
    store.store_order(a)
    assert RecordingStore(path).find_by_phone("5127238445") == [a]
    store.store_order(b)
    assert [o.id for o in RecordingStore(path).find_by_phone("5127238445")] == ["B", "A"]
    assert store.find_by_phone("0000000000") == []


def test_store_thousand_orders_survive_restart(tmp_path):
    path = tmp_path / "orders.jsonl"
    orders = random_orders(1000, 3)
    store = RecordingStore(path)
    for o in orders:
        store.store_order(o)
    dump = subprocess.run(
        [sys.executable, "-c",
         "import json,sys\nfrom drac.store import RecordingStore, order_to_dict\n"
         "s = RecordingStore(sys.argv[1])\n"
         "print(json.dumps({o.id: order_to_dict(o) for o in s.orders()}))", str(path)],
        check=True, capture_output=True, text=True).stdout
    reloaded = json.loads(dump)
    assert reloaded == json.loads(json.dumps({o.id: order_to_dict(o) for o in orders}))
    fresh = RecordingStore(path)
    assert all(fresh.get(o.id) == o for o in orders)
    for phone in {o.customer.phone for o in orders}:
        got = fresh.find_by_phone(phone)
        assert {o.id for o in got} == {o.id for o in orders if o.customer.phone == phone}


@pytest.mark.parametrize("line", [1, 2, 37, 200])
def test_corrupt_line_detected(tmp_path, line):
    path = tmp_path / "orders.jsonl"
    store = RecordingStore(path)
    for o in random_orders(200, 5):
        store.store_order(o)
    raw = path.read_bytes().split(b"\n")
    offset = sum(len(r) + 1 for r in raw[:line - 1])
    victim = bytearray(raw[line - 1])
    victim[len(victim) // 2] ^= 0x01
    raw[line - 1] = bytes(victim)
    path.write_bytes(b"\n".join(raw))
    with pytest.raises(CorruptStore) as exc:
        RecordingStore(path)
    assert exc.value.line == line and exc.value.offset == offset


def test_truncated_tail_detected(tmp_path):
    path = tmp_path / "orders.jsonl"
    store = RecordingStore(path)
    for o in random_orders(3, 1):
        store.store_order(o)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(CorruptStore) as exc:
        RecordingStore(path)
    assert exc.value.line == 3


@pytest.fixture(scope="module")
def cli_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    good = SCENARIOS / "s1_in_stock_purchase.scn"
    wrong = d / "wrong.scn"
    wrong.write_text(good.read_text().replace("terminal closed", "terminal installed"))
    broken = d / "broken.scn"
    broken.write_text('scenario 1 "x"\n  frobnicate\n')
    bad_spec = d / "bad.drac"
    bad_spec.write_text("drac A\n  service\n")
    bad_prices = d / "bad.csv"
    bad_prices.write_text("sku,nonsense\n1,2\n")
    return {"spec": {"ok": SPEC_FILE, "bad": bad_spec, "missing": d / "nope.drac"},
            "prices": {"ok": PRICES_FILE, "bad": bad_prices},
            "scenario": {"match": good, "mismatch": wrong, "bad": broken}}


def _cases():
    for s in ("ok", "bad", "missing"):
        for p in ("ok", "bad"):
            for sc in ("match", "mismatch", "bad"):
                for strict in (False, True):
                    if s != "ok" or p != "ok" or sc == "bad":
                        want = 1
                    elif sc == "mismatch" and strict:
                        want = 2
                    else:
                        want = 0
                    yield s, p, sc, strict, want


@pytest.mark.parametrize("s,p,sc,strict,want", list(_cases()))
def test_cli_exit_codes(cli_files, tmp_path, capsys, s, p, sc, strict, want):
    argv = ["run", "--spec", str(cli_files["spec"][s]), "--prices", str(cli_files["prices"][p]),
            "--scenario", str(cli_files["scenario"][sc]), "--seed", "1", "--trace-out", str(tmp_path / "t.tsv")]
    if strict:
        argv.append("--strict")
    assert main(argv) == want


def test_cli_validate(capsys, cli_files):
    assert main(["validate", str(SPEC_FILE)]) == 0
    out = capsys.readouterr().out
    assert "# 4 DRACs, 26 services (Designer 19, Measurer 3, Installer 3, Customer 1); 0 errors" in out
    assert main(["validate", str(cli_files["spec"]["bad"])]) == 1


def test_cli_bad_seed():
    assert main(["run", "--spec", str(SPEC_FILE), "--prices", str(PRICES_FILE), "--scenario",
                 str(SCENARIOS / "s1_in_stock_purchase.scn"), "--seed", str(2**64)]) == 1


def test_cli_report_dir(tmp_path):
    out = tmp_path / "rep"
    store = tmp_path / "orders.jsonl"
    proc = subprocess.run([sys.executable, "-m", "drac.cli", "run", "--spec", str(SPEC_FILE), "--prices",
                           str(PRICES_FILE), "--scenario", str(SCENARIOS / "s3_custom_order.scn"), "--seed", "1",
                           "--report-dir", str(out), "--store", str(store), "--strict"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "MATCH" in proc.stderr
    stem = out / "scenario_3_seed1"
    assert stem.with_suffix(".tsv").read_text() == proc.stdout
    for suffix in ("_timeline.png", "_channel.png"):
        png = out / f"scenario_3_seed1{suffix}"
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert RecordingStore(store).find_by_phone("5125550177")[0].state == "faxed"
