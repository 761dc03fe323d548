"""Batch command line: simulate -> beamform -> filter -> psi/cfi -> metrics -> render.

Every stage reads and writes dataset files, so ``pipeline`` produces the same
bytes as the equivalent chain of single-stage commands.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import __version__
from . import io as dio
from .beamform import beamform_all
from .errors import DatasetFormatError, PhaseSubError, PreconditionError
from .iqfilter import iq_demodulate, passthrough, svd_clutter_filter
from .metrics import compute_report
from .model import BeamformConfig, Preset, builtin_presets, get_preset
from .phantom import Phantom, simulate
from .psi import cfi_from_stack, psi_from_stack
from .render import render

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_CODES = """exit codes:
  0  success
  1  other processing error
  2  invalid command line
  3  unknown preset
  4  malformed or unreadable dataset / manifest
  5  dimension mismatch between inputs
  6  failed precondition (e.g. no frame pairs, grid deeper than the record)
  7  file system error
"""

BUNDLED_PHANTOMS = ("two_vessels.toml", "single_vessel.toml")


def _manifest_path(primary) -> Path:
    p = Path(primary)
    return p.with_name(p.name.split(".")[0] + ".manifest.json")


def load_phantom_file(path):
    """Phantom and optional ``[run]`` defaults from a TOML file.

    A bare name of a bundled phantom (``two_vessels.toml``) also works.
    """
    p = Path(path)
    if p.exists():
        text = p.read_bytes()
    elif p.name in BUNDLED_PHANTOMS and p.parent == Path("."):
        text = resources.files("phasesub").joinpath("data", p.name).read_bytes()
    else:
        raise FileNotFoundError(f"phantom file {path} not found")
    try:
        doc = tomllib.loads(text.decode("utf-8"))
        phantom = Phantom.from_dict(doc.get("phantom", {}))
    except (tomllib.TOMLDecodeError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: bad phantom file: {exc}") from exc
    return phantom, doc.get("run", {})


def _provenance(man: dict) -> dict:
    return {"preset": man["preset"]} if "preset" in man else {}


def _preset_from(man: dict, path) -> Preset:
    if "preset" not in man:
        raise DatasetFormatError(f"{path}: dataset does not record its preset")
    try:
        return Preset.from_dict(man["preset"])
    except (TypeError, ValueError, KeyError) as exc:
        raise DatasetFormatError(f"{path}: bad preset record: {exc}") from exc


# -- stages -----------------------------------------------------------------

def run_simulate(preset_name, phantom_path, out, seed=None, frames=None, workers=1):
    phantom, run = load_phantom_file(phantom_path)
    preset = get_preset(preset_name or run.get("preset") or _missing("--preset"))
    n_frames = frames if frames is not None else run.get("frames")
    if n_frames is not None:
        preset = preset.with_frames(int(n_frames))
    if seed is not None:
        phantom = replace(phantom, seed=int(seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        data = simulate(phantom, preset.acquisition, workers=workers)
    dio.save_channel(out, data, extra={"preset": preset.to_dict(), "phantom": phantom.to_dict()})
    params = {"preset": preset.to_dict(), "phantom": phantom.to_dict(), "seed": phantom.seed}
    dio.RunManifest.for_files("simulate", params, outputs=[out]).write(_manifest_path(out))
    return out


def _missing(flag):
    raise PreconditionError(f"{flag} is required (not given and not set by the phantom file)")


def run_beamform(inp, out, interpolation=None, workers=1):
    man = dio.read_manifest(inp)
    preset = _preset_from(man, inp)
    bcfg = preset.beamform if interpolation is None else replace(preset.beamform, interpolation=interpolation)
    stack = beamform_all(dio.load_channel(inp), preset.grid, beamform_config=bcfg, workers=workers)
    dio.save_beamformed(out, stack, extra=_provenance(man))
    params = {"grid": preset.grid.to_dict(), "beamform": bcfg.to_dict()}
    dio.RunManifest.for_files("beamform", params, inputs=[inp], outputs=[out]).write(_manifest_path(out))
    return out


def run_filter(inp, out, decimation=None, demod_freq=None, reject_low=0.10, reject_high=0.10,
               clutter_filter=True):
    man = dio.read_manifest(inp)
    preset = _preset_from(man, inp)
    decim = decimation if decimation is not None else preset.decimation
    iq = iq_demodulate(dio.load_beamformed(inp), demod_freq=demod_freq, decim=decim)
    filtered = svd_clutter_filter(iq, reject_low, reject_high) if clutter_filter else passthrough(iq)
    dio.save_iq(out, filtered, extra=_provenance(man))
    params = {"decimation": decim, "demod_freq": filtered.demod_freq, "reject_low": reject_low,
              "reject_high": reject_high, "clutter_filter": clutter_filter}
    dio.RunManifest.for_files("filter", params, inputs=[inp], outputs=[out]).write(_manifest_path(out))
    return out


def run_psi(inp, out, n_sets=None, symmetrize=False):
    man = dio.read_manifest(inp)
    n_sets = n_sets if n_sets is not None else (_preset_from(man, inp).n_sets if "preset" in man else 1)
    stack = dio.load_iq(inp)
    psi, pre_a, pre_b = psi_from_stack(stack, n_sets=n_sets, symmetrize=symmetrize)
    out = Path(out)
    outputs = [out, out.with_name("precursor_a.psid"), out.with_name("precursor_b.psid")]
    for path, image in zip(outputs, (psi, pre_a, pre_b)):
        dio.save_phase_image(path, image, extra=_provenance(man))
    params = {"n_sets": n_sets, "symmetrize": symmetrize}
    dio.RunManifest.for_files("psi", params, inputs=[inp], outputs=outputs).write(_manifest_path(out))
    return out


def run_cfi(inp, out, n_sets=None):
    man = dio.read_manifest(inp)
    n_sets = n_sets if n_sets is not None else (_preset_from(man, inp).n_sets if "preset" in man else 1)
    image = cfi_from_stack(dio.load_iq(inp), n_sets=n_sets)
    dio.save_phase_image(out, image, extra=_provenance(man))
    dio.RunManifest.for_files("cfi", {"n_sets": n_sets}, inputs=[inp], outputs=[out]).write(_manifest_path(out))
    return out


def run_metrics(psi_path, cfi_path, out, threshold_db=-6.0, bin_pixels=2.0):
    psi = dio.load_phase_image(psi_path)
    cfi = dio.load_phase_image(cfi_path)
    if psi.config is None or psi.grid is None:
        raise DatasetFormatError(f"{psi_path}: phase image lacks grid or acquisition config")
    report = compute_report(psi, cfi, psi.config.wavelength, threshold_db=threshold_db, bin_pixels=bin_pixels)
    out = Path(out)
    json_out = out.with_suffix(".json")
    dio.atomic_write(out, report.to_text().encode("utf-8"))
    dio.atomic_write(json_out, dio.dumps_manifest(report.to_dict()).encode("utf-8"))
    params = {"threshold_db": threshold_db, "bin_pixels": bin_pixels, "wavelength": psi.config.wavelength}
    dio.RunManifest.for_files("metrics", params, inputs=[psi_path, cfi_path], outputs=[out, json_out],
                              results=report.to_dict()).write(_manifest_path(out))
    return report


def run_render(inp, out, style="color"):
    peak = render(dio.load_phase_image(inp), out, style)
    dio.RunManifest.for_files("render", {"style": style}, inputs=[inp], outputs=[out],
                              results={"normalization_max": peak}).write(_manifest_path(out))
    return peak


def run_pipeline(preset_name, phantom_path, outdir, seed=None, frames=None, workers=1, n_sets=None,
                 clutter_filter=True):
    d = Path(outdir)
    d.mkdir(parents=True, exist_ok=True)
    paths = {k: d / f"{k}.psid" for k in ("channel", "beamformed", "filtered", "psi", "cfi")}
    run_simulate(preset_name, phantom_path, paths["channel"], seed=seed, frames=frames, workers=workers)
    run_beamform(paths["channel"], paths["beamformed"], workers=workers)
    run_filter(paths["beamformed"], paths["filtered"], clutter_filter=clutter_filter)
    run_psi(paths["filtered"], paths["psi"], n_sets=n_sets)
    run_cfi(paths["filtered"], paths["cfi"], n_sets=n_sets)
    report = run_metrics(paths["psi"], paths["cfi"], d / "metrics.txt")
    run_render(paths["psi"], d / "psi_image.ppm")
    run_render(paths["cfi"], d / "cfi_image.ppm")
    files = sorted(p for p in d.iterdir() if p.is_file() and p.name != "pipeline.manifest.json")
    params = {"phantom_file": Path(phantom_path).name, "preset": preset_name, "seed": seed, "frames": frames,
              "n_sets": n_sets, "clutter_filter": clutter_filter}
    dio.RunManifest.for_files("pipeline", params, outputs=files,
                              results={"coverage_ratio": report.coverage_ratio}).write(d / "pipeline.manifest.json")
    return report


# -- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="phasesub", description=__doc__.splitlines()[0],
                                     epilog=EXIT_CODES, formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, help=help_, description=help_, epilog=EXIT_CODES, formatter_class=fmt)

    p = add("presets", "list built-in acquisition presets, or print one as JSON")
    p.add_argument("name", nargs="?")

    p = add("simulate", "synthesize channel data for a phantom under a preset")
    p.add_argument("--preset", help="preset name (default: [run] preset of the phantom file)")
    p.add_argument("--phantom", required=True, help="phantom TOML file or a bundled name")
    p.add_argument("--seed", type=int, help="override the phantom seed")
    p.add_argument("--frames", type=int, help="override the number of frames")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)

    p = add("beamform", "delay-and-sum beamform channel data with the four apodizations")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--interpolation", choices=("linear", "nearest"))
    p.add_argument("--workers", type=int, default=1)

    p = add("filter", "IQ-demodulate, decimate and SVD clutter-filter a beamformed stack")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--decimation", type=int)
    p.add_argument("--demod-freq", type=float, help="Hz (default: pulse center frequency)")
    p.add_argument("--reject-low", type=float, default=0.10)
    p.add_argument("--reject-high", type=float, default=0.10)
    p.add_argument("--no-clutter-filter", action="store_true")

    for name, help_ in (("psi", "phase subtraction image (writes precursors alongside)"),
                        ("cfi", "color-flow phase image of the rectangle-apodized beam")):
        p = add(name, help_)
        p.add_argument("--in", dest="inp", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--n-sets", type=int)
        if name == "psi":
            p.add_argument("--symmetrize", action="store_true",
                           help="negate the zero-mean beam in the third phase term too")

    p = add("metrics", "skeleton FWHM radii and spectral coverage ratio of a PSI/CFI pair")
    p.add_argument("--psi", required=True)
    p.add_argument("--cfi", required=True)
    p.add_argument("--out", required=True, help="text report; a .json twin is written alongside")
    p.add_argument("--threshold-db", type=float, default=-6.0)
    p.add_argument("--bin-pixels", type=float, default=2.0)

    p = add("render", "export a phase image as PGM (gray) or PPM (color)")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--style", choices=("gray", "color"), default="color")

    p = add("pipeline", "run every stage into one output directory")
    p.add_argument("--preset")
    p.add_argument("--phantom", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--n-sets", type=int)
    p.add_argument("--no-clutter-filter", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)

    p = add("verify", "check the files listed in a run manifest against their hashes")
    p.add_argument("manifest")
    return parser


def _dispatch(args):
    c = args.command
    if c == "presets":
        if args.name:
            print(dio.dumps_manifest(get_preset(args.name).to_dict()), end="")
        else:
            for name, preset in builtin_presets().items():
                acq = preset.acquisition
                print(f"{name:16s} {acq.pulse.center_freq / 1e6:6.2f} MHz  {acq.geometry.element_count:4d} el  "
                      f"{acq.n_angles:2d} angles  {acq.n_frames:5d} frames  grid {preset.grid.nz}x{preset.grid.nx}")
    elif c == "simulate":
        run_simulate(args.preset, args.phantom, args.out, args.seed, args.frames, args.workers)
    elif c == "beamform":
        run_beamform(args.inp, args.out, args.interpolation, args.workers)
    elif c == "filter":
        run_filter(args.inp, args.out, args.decimation, args.demod_freq, args.reject_low, args.reject_high,
                   not args.no_clutter_filter)
    elif c == "psi":
        run_psi(args.inp, args.out, args.n_sets, args.symmetrize)
    elif c == "cfi":
        run_cfi(args.inp, args.out, args.n_sets)
    elif c == "metrics":
        print(run_metrics(args.psi, args.cfi, args.out, args.threshold_db, args.bin_pixels).to_text(), end="")
    elif c == "render":
        run_render(args.inp, args.out, args.style)
    elif c == "pipeline":
        report = run_pipeline(args.preset, args.phantom, args.out, args.seed, args.frames, args.workers,
                              args.n_sets, not args.no_clutter_filter)
        print(report.to_text(), end="")
    elif c == "verify":
        path = Path(args.manifest)
        bad = dio.RunManifest.read(path).verify(path.parent)
        if bad:
            raise DatasetFormatError("hash mismatch or missing: " + ", ".join(bad))
        print("ok")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except PhaseSubError as exc:
        code, msg = exc.exit_code, str(exc)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        code, msg = DatasetFormatError.exit_code, str(exc)
    except ValueError as exc:
        code, msg = PreconditionError.exit_code, str(exc)
    except OSError as exc:
        code, msg = 7, str(exc)
    print(f"phasesub {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
