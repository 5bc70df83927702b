"""Compare Monte Carlo STDs with the asymptotic variance implied by the noise level.

The option observation error in log sigma^2 is measured directly on simulated panels,
turned into the noise constant of the theoretical variance, and the implied relative
STD of each option-based VV estimator is printed next to the feasible-AVar average.

    python scripts/theory_vs_mc.py --replications 100
"""

from __future__ import annotations

import argparse
import math
from dataclasses import dataclass

import numpy as np

from optvov import ScenarioConfig, ground_truth, run_mc
from optvov.estimators import TheoreticalAVarInputs, error_balance, theoretical_estimator_variance
from optvov.charfn import U_LEVEL


@dataclass
class TheoryConfig:
    case: str = "M"
    v0: float = 0.0167
    replications: int = 100
    workers: int | None = None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--case", default="M")
    ap.add_argument("--v0", type=float, default=0.0167)
    ap.add_argument("--replications", type=int, default=100)
    ap.add_argument("--workers", type=int)
    a = ap.parse_args(argv)
    tc = TheoryConfig(a.case, a.v0, a.replications, a.workers)

    sc = ScenarioConfig(case=tc.case, v0=tc.v0, replications=tc.replications)
    summary, results = run_mc(sc, workers=tc.workers)
    vv, lv = ground_truth(sc.params(), tc.v0)
    u = math.sqrt(-2 * math.log(U_LEVEL) / tc.v0)
    print(f"truth VV={vv:.4f} LV={lv:.4f}; u at the crossing for V0: {u:.2f}")
    for name, mode, tenor in (("VV_T", "single", sc.tenor_short), ("VV_Tp", "single", sc.tenor_long),
                              ("VV_TTp", "double", sc.tenor_short)):
        phi = error_balance(sc.delta_n, sc.mesh / sc.x0, tenor)
        inp = TheoreticalAVarInputs(sigma2=tc.v0, vv=vv, lv=lv, phi=phi, rho0=1.0, zeta0=sc.noise_scale, u=u,
                                    rho0_long=math.sqrt(sc.tenor_short / sc.tenor_long))
        var = theoretical_estimator_variance(inp, "vv", mode, sc.k_n, sc.delta_n, sc.mesh / sc.x0, tenor)
        feas = np.array([r.estimates[name][1] for r in results if not r.rejected])
        print(f"{name:7s} MC std={summary.rows[name].std:.3f}  theory std={math.sqrt(var) / vv:.3f}  "
              f"mean feasible std={math.sqrt(np.mean(feas) / sc.k_n) / vv:.3f}")


if __name__ == "__main__":
    main()
