"""Compare the compiled and numpy kernel backends on a desk preset.

Usage: python3 benchmarks/bench_kernels.py [--preset mouse50_desk] [--frames 4] [--repeat 3]
"""

import argparse
import time
import warnings
from dataclasses import replace

import numpy as np

from phasesub import kernels
from phasesub.beamform import beamform_all
from phasesub.model import get_preset
from phasesub.phantom import Phantom, Vessel, simulate


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="mouse50_desk")
    ap.add_argument("--frames", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    preset = get_preset(args.preset)
    acq = replace(preset.acquisition, n_frames=args.frames)
    g = preset.grid
    phantom = Phantom(vessels=(Vessel((0.0, g.z0), (0.0, g.z_max), 6e-6, 1e-3, 4000.0),),
                      tissue_scatterer_count=300, region=(g.x0, -g.x0, g.z0, g.z_max), seed=1)
    backends = kernels.available()
    print(f"{args.preset}: {args.frames} frames, {acq.n_angles} angles, "
          f"{acq.geometry.element_count} elements, grid {g.nz}x{g.nx}")
    print(f"{'stage':10s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))

    results = {}
    for stage in ("simulate", "beamform"):
        row = {}
        for b in backends:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                if stage == "simulate":
                    row[b] = best_of(lambda: simulate(phantom, acq, backend=b).samples, args.repeat)
                else:
                    data = simulate(phantom, acq)
                    row[b] = best_of(lambda: beamform_all(data, g, acq, preset.beamform, backend=b).rf, args.repeat)
        results[stage] = row
        line = f"{stage:10s}" + "".join(f"{row[b][0]:11.3f}s" for b in backends)
        if len(backends) > 1:
            line += f"{row['python'][0] / row['cython'][0]:11.1f}x"
            ref = row["python"][1]
            dev = np.abs(row["cython"][1] - ref).max() / max(np.abs(ref).max(), 1e-300)
            line += f"   (max rel diff {dev:.1e})"
        print(line)
    return results


if __name__ == "__main__":
    main()
