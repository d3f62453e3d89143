import base64
import csv
import io
import json
import math

import numpy as np
import pytest

from tre_assure.cli import EXIT_DATA, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, main, run_scenarios
from tre_assure.contracts import TailRiskEnvelope, offer_from_dict, offer_to_dict, sign_tre, tre_to_dict
from tre_assure.sim.engine import make_rng

TANDEM = [{"domain_id": f"d{i + 1}", "reservation_class": "gold", "theta": 1.0, "R": r, "T": t}
          for i, (r, t) in enumerate(zip((1.0, 1.15, 1.25), (0.6, 0.5, 0.4)))]


def run(tmp_path, cfg, *argv, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return main([argv[0], "--config", str(path), *argv[1:]])


def signed_config(keypair, tres):
    sk, pk = keypair
    signed = [tre_to_dict(sign_tre(TailRiskEnvelope(**t), sk, "authority")) for t in tres]
    return signed, {"authority": base64.b64encode(pk).decode()}


class TestBounds:
    def test_compose_reference(self, tmp_path, capsys):
        cfg = {"tres": TANDEM, "envelope": {"theta": 1.0, "rho": 0.5}, "tau": 30.0}
        assert run(tmp_path, cfg, "compose", "--unsigned", "--out", str(tmp_path / "o")) == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert out["bound"]["probability"] == pytest.approx(1.645859413369427819e-06, rel=1e-12)
        assert (tmp_path / "o" / "compose.json").exists()
        assert json.loads((tmp_path / "o" / "manifest.json").read_text())["command"] == "compose"

    def test_bound_single(self, tmp_path, capsys):
        cfg = {"tre": {"domain_id": "d", "reservation_class": "c", "theta": 1.0, "R": 2.0},
               "envelope": {"theta": 1.0, "rho": 1.0}, "tau": 10.0}
        assert run(tmp_path, cfg, "bound", "--unsigned") == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert out["bound"]["probability"] == pytest.approx(7.182163137775450641e-05, rel=1e-12)

    def test_signed(self, tmp_path, keypair, capsys):
        tres, keys = signed_config(keypair, TANDEM)
        cfg = {"tres": tres, "public_keys": keys, "envelope": {"theta": 1.0, "rho": 0.5}, "tau": 20.0}
        assert run(tmp_path, cfg, "compose") == EXIT_OK
        tres[0]["R"] = 5.0
        assert run(tmp_path, cfg, "compose") == EXIT_INPUT

    def test_unsigned_rejected_without_flag(self, tmp_path):
        cfg = {"tres": TANDEM, "envelope": {"theta": 1.0, "rho": 0.5}, "tau": 20.0}
        assert run(tmp_path, cfg, "compose") == EXIT_INPUT

    def test_feasible_exit_codes(self, tmp_path):
        base = {"tres": TANDEM, "envelope": {"theta": 1.0, "rho": 0.5}}
        assert run(tmp_path, dict(base, tau=20.0, epsilon=1e-3), "feasible", "--unsigned") == EXIT_OK
        assert run(tmp_path, dict(base, tau=5.0, epsilon=1e-3), "feasible", "--unsigned") == EXIT_INFEASIBLE

    def test_infeasible_margin(self, tmp_path):
        cfg = {"tres": TANDEM, "envelope": {"theta": 1.0, "rho": 1.2}, "tau": 20.0}
        assert run(tmp_path, cfg, "compose", "--unsigned") == EXIT_INFEASIBLE

    def test_malformed(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        assert main(["compose", "--config", str(tmp_path / "bad.json")]) == EXIT_INPUT
        assert main(["compose"]) == EXIT_INPUT
        assert main(["nonsense"]) == EXIT_INPUT
        cfg = {"tres": [dict(TANDEM[0], R=-1.0)], "envelope": {"theta": 1.0, "rho": 0.5}, "tau": 20}
        assert run(tmp_path, cfg, "compose", "--unsigned") == EXIT_INPUT


class TestProvision:
    def test_fixture(self, tmp_path, two_domain, capsys):
        cfg = dict(two_domain, policy=["eu"])
        out = tmp_path / "plan"
        assert run(tmp_path, cfg, "provision", "--unsigned", "--out", str(out)) == EXIT_OK
        plan = json.loads((out / "plan.json").read_text())
        ref = two_domain["reference"]["cost"]
        assert abs(plan["objective_cost"] - ref) <= 0.01 * ref
        rows = list(csv.reader(io.StringIO((out / "residuals.csv").read_text())))
        assert rows[0] == ["iteration", "primal", "dual"] and len(rows) > 2

    def test_signed_offers(self, tmp_path, two_domain, keypair):
        sk, pk = keypair
        cfg = json.loads(json.dumps(two_domain))
        for stage in cfg["stages"]:
            for i, o in enumerate(stage):
                offer = offer_from_dict(o)
                signed = tuple(sign_tre(t, sk, "authority") for t in offer.tres)
                stage[i] = offer_to_dict(type(offer)(offer.domain_id, signed, offer.cost_slope,
                                                     offer.capacity, offer.admissible_tags))
        cfg["public_keys"] = {"authority": base64.b64encode(pk).decode()}
        assert run(tmp_path, cfg, "provision") == EXIT_OK

    def test_infeasible(self, tmp_path, two_domain, capsys):
        cfg = json.loads(json.dumps(two_domain))
        cfg["slos"][0]["tau"] = 1.2
        assert run(tmp_path, cfg, "provision", "--unsigned") == EXIT_INFEASIBLE
        out = capsys.readouterr().out
        assert json.loads(out)["status"] == "infeasible"

    def test_empty_stage(self, tmp_path, two_domain):
        cfg = dict(two_domain, stages=[[]])
        assert run(tmp_path, cfg, "provision", "--unsigned") == EXIT_INPUT


SMALL = {"n_packets": 400}


class TestSimulate:
    def test_row_counts(self, tmp_path):
        out = tmp_path / "sim"
        assert run(tmp_path, SMALL, "simulate", "all", "--trials", "2", "--seed", "3",
                   "--out", str(out)) == EXIT_OK
        count = {p.name: len((out / p.name).read_text().splitlines()) - 1 for p in out.glob("*.csv")}
        assert count == {"sweep_load.csv": 10, "isolation_shared.csv": 8,
                         "isolation_reserved.csv": 8, "degradation.csv": 6,
                         "validate_bound.csv": 50}
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["master_seed"] == 3 and manifest["n_trials"] == 2
        rows = list(csv.DictReader(io.StringIO((out / "validate_bound.csv").read_text())))
        assert all(r["dominated"] == "1" for r in rows)

    def test_deterministic(self):
        a = run_scenarios("all", SMALL, 7, 2)
        b = run_scenarios("all", SMALL, 7, 2)
        c = run_scenarios("degradation", SMALL, 8, 2)
        assert a == b
        assert c["degradation.csv"] != a["degradation.csv"]

    def test_bad_trials(self, tmp_path):
        assert run(tmp_path, SMALL, "simulate", "isolation", "--trials", "0") == EXIT_INPUT

    def test_unstable(self, tmp_path):
        cfg = dict(SMALL, lambda_v=1.5)
        assert run(tmp_path, cfg, "simulate", "isolation", "--trials", "1",
                   "--out", str(tmp_path)) == EXIT_INFEASIBLE


def write_telemetry(path, values):
    path.write_text("delay\n" + "\n".join(repr(float(v)) for v in values) + "\n")


class TestAudit:
    def config(self, tmp_path, values, **kw):
        write_telemetry(tmp_path / "tel.csv", values)
        cfg = {"telemetry": "tel.csv", "slo": {"tenant_id": "u", "class_id": "c", "tau": 30.0,
                                               "epsilon": 1e-3},
               "tres": TANDEM, "envelope": {"theta": 1.0, "rho": 0.5}, "n_bootstrap": 20,
               "payment": 100.0, "penalty": 50.0}
        cfg.update(kw)
        return cfg

    def test_compliant(self, tmp_path, capsys):
        x = make_rng(1).standard_exponential(20_000) / 0.45
        cfg = self.config(tmp_path, x, tres=[{"domain_id": "d", "reservation_class": "c",
                                              "theta": 0.3, "R": 1.0}],
                          envelope={"theta": 0.3, "lambda": 0.55})
        assert run(tmp_path, cfg, "audit", "--unsigned") == EXIT_OK
        rep = json.loads(capsys.readouterr().out)
        assert rep["verdict"] == "compliant" and rep["updated_tres"] == []

    def test_breach(self, tmp_path, capsys):
        u = make_rng(2).random(20_000)
        x = 25.0 + 4.0 / 0.2 * (u ** -0.2 - 1)
        cfg = self.config(tmp_path, x)
        out = tmp_path / "audit"
        assert run(tmp_path, cfg, "audit", "--unsigned", "--out", str(out)) == EXIT_OK
        rep = json.loads((out / "audit.json").read_text())
        assert rep["verdict"] == "breach"
        assert rep["updated_tres"][0]["domain_id"] == "d1"
        pen = rep["settlement"]["penalty_shares"]
        assert math.isclose(sum(pen.values()), 1.0)

    def test_simulation_attribution(self, tmp_path, capsys):
        (tmp_path / "deg.csv").write_text(
            "s,dq_all,dq_only_1,dq_only_2,dq_only_3,stderr_all,saturated_all\n"
            "0.92,12.0,6.0,3.0,1.0,0.1,0\n1.0,0.0,0.0,0.0,0.0,0.0,0\n")
        u = make_rng(3).random(20_000)
        cfg = self.config(tmp_path, 25.0 + 20 * (u ** -0.2 - 1), degradation_csv="deg.csv")
        assert run(tmp_path, cfg, "audit", "--unsigned") == EXIT_OK
        rep = json.loads(capsys.readouterr().out)
        assert rep["attribution"]["per_domain_share"] == pytest.approx({"1": 7.2, "2": 3.6, "3": 1.2})
        assert rep["settlement"]["penalty_shares"]["1"] == pytest.approx(0.6)

    def test_insufficient(self, tmp_path):
        cfg = self.config(tmp_path, np.arange(1.0, 21.0))
        assert run(tmp_path, cfg, "audit", "--unsigned") == EXIT_DATA
