"""Regenerates the CSV fixtures under data/.

Usage: python3 tools/make_fixtures.py [seed]
"""
import sys

import numpy as np


def confounded_rct(seed, n=333):
    # Confounded observational sample with no treatment effect: the
    # covariates drive both treatment uptake and the outcome.
    rng = np.random.default_rng(seed)
    age = rng.normal(0.0, 1.0, n)
    severity = rng.normal(0.0, 1.0, n)
    comorbid = rng.binomial(1, 0.4, n).astype(float)
    site = rng.normal(0.0, 1.0, n)
    lp = -0.1 + 0.9 * age - 0.7 * severity + 0.3 * comorbid
    z = rng.binomial(1, 1.0 / (1.0 + np.exp(-lp)))
    y = 1.0 * age - 0.8 * severity + 0.5 * comorbid + 0.2 * site + rng.normal(0, 1, n)
    return age, severity, comorbid, site, z, y


def write(path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(r) + "\n")


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 10
    age, sev, com, site, z, y = confounded_rct(seed)
    rows = [[f"s{i + 1:03d}", str(z[i]), f"{y[i]:.6f}", f"{age[i]:.6f}", f"{sev[i]:.6f}",
             f"{int(com[i])}", f"{site[i]:.6f}"] for i in range(len(z))]
    write("data/confounded_rct.csv", ["id", "treated", "outcome", "age", "severity", "comorbid", "site"], rows)
    write("data/four_rows.csv", ["z", "y"], [["1", "1"], ["1", "3"], ["0", "2"], ["0", "4"]])
    write("data/bad_z.csv", ["z", "y"], [["1", "1"], ["0", "3"], ["2", "2"], ["0", "4"]])
    write("data/single_arm.csv", ["z", "y", "w"], [["1", "1.5", "0.2"], ["1", "2.5", "0.4"], ["1", "0.5", "0.9"]])


if __name__ == "__main__":
    main()
