"""End-to-end computations behind the command-line tool.

Each ``compute_*`` function returns plain results; ``write_*`` functions put
them on disk.  Failures inside a stage are re-raised as :class:`StageError`
tagged with the stage name.
"""

from __future__ import annotations

import contextlib
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .chsh import (
    TSIRELSON, ChshResult, analytic_planar_bound, optimize_settings,
)
from .config import ConfigError, RunConfig
from .coupler import (
    CouplingDesign, CrosstalkEntry, crosstalk_analysis, design_grating_period,
    full_transfer_voltage, kappa_for_electrode, kappa_sweep, optimize_electrode, voltage_sweep,
)
from .electrode import ElectrodeConfig
from .io import write_array, write_csv, write_json, write_legend
from .modesolver import GuidedMode, Grid2D, build_index_profile, find_mode, guided_modes
from .spdc import (
    PROCESSES, QpmSourceConfig, SourceModel, build_density_matrix, estimate_wv,
    idler_wavelength, process_spectrum,
)

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A numerical failure inside a named pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except (ConfigError, StageError):
        raise
    except (ValueError, RuntimeError, LookupError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def _solver(cfg: RunConfig) -> dict:
    return {k: float(cfg[f"solver.{k}"]) for k in ("spacing", "margin", "cover")}


def _linspace(spec) -> np.ndarray:
    return np.linspace(float(spec[0]), float(spec[1]), int(spec[2]))


# ---------------------------------------------------------------- modes

MODE_JOBS = (
    ("two_mode_section", "H", "signal"),
    ("two_mode_section", "V", "idler"),
    ("source_section", "H", "signal"),
    ("source_section", "V", "idler"),
    ("source_section", "H", "pump"),
)


def _wavelength(cfg: RunConfig, which: str) -> float:
    if which == "pump":
        return cfg.pump_wavelength
    if which == "idler" and cfg["wavelengths.pump"] is not None:
        return idler_wavelength(cfg.pump_wavelength, cfg["wavelengths.signal"])
    return float(cfg[f"wavelengths.{which}"])


def compute_modes(cfg: RunConfig) -> list[tuple[str, str, float, list[GuidedMode]]]:
    out = []
    for section, pol, which in MODE_JOBS:
        lam = _wavelength(cfg, which)
        max_modes = 10 if which == "pump" else 6
        with stage(f"modes/{section}/{pol}"):
            modes = guided_modes(cfg.geometry(section), pol, lam, max_modes=max_modes, **_solver(cfg))
        out.append((section, pol, lam, modes))
    return out


def write_modes(results, out: Path) -> list[Path]:
    rows = []
    paths = []
    for section, pol, lam, modes in results:
        for m in modes:
            rows.append((section, pol, lam, m.label, m.beta, m.n_eff, m.residual))
            stem = f"{section}_{pol}_{lam * 1e3:.3f}nm_{m.label}"
            paths.append(write_array(out / "fields" / f"{stem}.npy", m.field.values))
        ref = modes[0].field
        tag = f"{section}_{pol}_{lam * 1e3:.3f}nm"
        write_array(out / "fields" / f"{tag}_y.npy", ref.y)
        write_array(out / "fields" / f"{tag}_z.npy", ref.z)
    header = ("section", "polarization", "wavelength_um", "mode", "beta_per_um", "n_eff", "residual")
    paths.insert(0, write_csv(out / "modes.csv", header, rows))
    write_legend(out / "modes.legend.txt", {
        "modes.csv": "one row per guided mode; beta in rad/um, residual is the relative eigen-residual",
        "fields/<section>_<pol>_<nm>_<mode>.npy": "normalized field psi[y, z], unit integral of psi^2",
        "fields/<section>_<pol>_<nm>_y.npy, _z.npy": "grid axes in um; z is depth, negative in the cover",
    })
    return paths


# ---------------------------------------------------------------- design

@dataclass(frozen=True)
class PolarizationDesign:
    design: CouplingDesign
    electrode: ElectrodeConfig
    mode00: GuidedMode
    mode10: GuidedMode
    profile: Grid2D


@dataclass(frozen=True)
class DesignResult:
    H: PolarizationDesign
    V: PolarizationDesign
    cross_kappa: dict[str, float]  # kappa of the other polarization under each grating's electrode
    crosstalk: dict[str, CrosstalkEntry]


def _two_mode_pair(cfg: RunConfig, pol: str):
    which = "signal" if pol == "H" else "idler"
    lam = _wavelength(cfg, which)
    geom = cfg.geometry("two_mode_section")
    sv = _solver(cfg)
    with stage(f"design/modes/{pol}"):
        modes = guided_modes(geom, pol, lam, **sv)
        m00, m10 = find_mode(modes, (0, 0)), find_mode(modes, (1, 0))
        if len(modes) != 2:
            log.warning("two-mode section guides %d %s modes", len(modes), pol)
        profile = build_index_profile(geom, pol, lam, sv["spacing"], sv["margin"], sv["cover"])
    return m00, m10, profile


def _polarization_design(cfg: RunConfig, pol: str) -> PolarizationDesign:
    m00, m10, profile = _two_mode_pair(cfg, pol)
    tensor = cfg.material().eo
    length = float(cfg["electrode.length"])
    a, d = cfg["electrode.half_gap"], cfg["electrode.offset"]
    with stage(f"design/electrode/{pol}"):
        if a is None or d is None:
            a, d, kappa = optimize_electrode(
                m00, m10, profile,
                half_gaps=_linspace(cfg["electrode.half_gap_grid"]),
                offsets=_linspace(cfg["electrode.offset_grid"]),
                tensor=tensor,
            )
        else:
            kappa = kappa_for_electrode(m00, m10, profile, ElectrodeConfig(float(a), float(d)), tensor)
    with stage(f"design/coupler/{pol}"):
        dbeta = m00.beta - m10.beta
        period = design_grating_period(dbeta)
        design = CouplingDesign(pol, kappa, period, dbeta, length)
        electrode = ElectrodeConfig(float(a), float(d)).replace(period_lambda=period, length_L=length)
    return PolarizationDesign(design, electrode, m00, m10, profile)


def compute_design(cfg: RunConfig) -> DesignResult:
    h = _polarization_design(cfg, "H")
    v = _polarization_design(cfg, "V")
    tensor = cfg.material().eo
    with stage("design/crosstalk"):
        # each grating drives the other polarization through its own cross-section
        k_v_under_h = kappa_for_electrode(v.mode00, v.mode10, v.profile, h.electrode, tensor)
        k_h_under_v = kappa_for_electrode(h.mode00, h.mode10, h.profile, v.electrode, tensor)
        xt_h = crosstalk_analysis(h.design, replace(v.design, kappa_per_volt=k_v_under_h),
                                  full_transfer_voltage(h.design))["H"]
        xt_v = crosstalk_analysis(replace(h.design, kappa_per_volt=k_h_under_v), v.design,
                                  full_transfer_voltage(v.design))["V"]
    return DesignResult(h, v, {"H": k_v_under_h, "V": k_h_under_v}, {"H": xt_h, "V": xt_v})


def design_record(res: DesignResult) -> dict:
    rec = {"polarizations": {}, "crosstalk": {}}
    for pol in ("H", "V"):
        p = getattr(res, pol)
        rec["polarizations"][pol] = {
            "wavelength_um": p.mode00.wavelength,
            "beta00_per_um": p.mode00.beta,
            "beta10_per_um": p.mode10.beta,
            "n_eff00": p.mode00.n_eff,
            "n_eff10": p.mode10.n_eff,
            "delta_beta_per_um": p.design.delta_beta,
            "grating_period_um": p.design.grating_period,
            "kappa_per_volt_per_um": p.design.kappa_per_volt,
            "electrode_half_gap_um": p.electrode.half_gap_a,
            "electrode_offset_um": p.electrode.offset_d,
            "length_um": p.design.length_L,
            "full_transfer_voltage_V": full_transfer_voltage(p.design),
        }
    for grating, e in res.crosstalk.items():
        other = "V" if grating == "H" else "H"
        rec["crosstalk"][grating] = {
            "voltage_V": e.voltage,
            "fraction_H": e.fraction_H,
            "fraction_V": e.fraction_V,
            "ceiling_H": e.ceiling_H,
            "ceiling_V": e.ceiling_V,
            "delta_H_per_um": e.delta_H,
            "delta_V_per_um": e.delta_V,
            f"kappa_{other}_per_volt_per_um": res.cross_kappa[grating],
        }
    return rec


def write_design(cfg: RunConfig, res: DesignResult, out: Path) -> list[Path]:
    offsets = _linspace(cfg["electrode.offset_grid"])
    tensor = cfg.material().eo
    with stage("design/kappa-sweep"):
        cols = []
        for p in (res.H, res.V):
            cols.append(kappa_sweep(p.mode00, p.mode10, p.profile, [p.electrode.half_gap_a],
                                    offsets, tensor)[0])
    paths = [
        write_json(out / "design.json", design_record(res)),
        write_csv(out / "kappa_vs_offset.csv", ("offset_um", "kappa_H_per_um", "kappa_V_per_um"),
                  zip(offsets, cols[0], cols[1])),
    ]
    n = int(cfg["sweep.voltage_points"])
    factor = float(cfg["sweep.voltage_max_factor"])
    with stage("design/voltage-sweep"):
        for grating, p in (("H", res.H), ("V", res.V)):
            if grating == "H":
                dh, dv = res.H.design, replace(res.V.design, kappa_per_volt=res.cross_kappa["H"])
            else:
                dh, dv = replace(res.H.design, kappa_per_volt=res.cross_kappa["V"]), res.V.design
            volts = np.linspace(0.0, factor * full_transfer_voltage(p.design), n)
            paths.append(write_csv(
                out / f"voltage_sweep_{grating}.csv",
                ("voltage_V", "P00_H", "P10_H", "P00_V", "P10_V"),
                voltage_sweep(dh, dv, grating, volts),
            ))
    write_legend(out / "design.legend.txt", {
        "design.json": "grating periods, coupling per volt, electrode position and crosstalk per grating",
        "kappa_vs_offset.csv": "coupling at 1 V against electrode offset d, each polarization at its own half-gap a",
        "voltage_sweep_<G>.csv": "output powers under the grating designed for G, input 00 for H and 10 for V",
    })
    return paths


# ---------------------------------------------------------------- sweep

def compute_kappa_map(cfg: RunConfig) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    gaps = _linspace(cfg["electrode.half_gap_grid"])
    offsets = _linspace(cfg["electrode.offset_grid"])
    tensor = cfg.material().eo
    maps = {}
    for pol in ("H", "V"):
        m00, m10, profile = _two_mode_pair(cfg, pol)
        with stage(f"sweep/{pol}"):
            maps[pol] = kappa_sweep(m00, m10, profile, gaps, offsets, tensor)
    return gaps, offsets, maps


def write_kappa_map(gaps, offsets, maps, out: Path) -> list[Path]:
    rows = [
        (a, d, maps["H"][i, j], maps["V"][i, j])
        for i, a in enumerate(gaps)
        for j, d in enumerate(offsets)
    ]
    path = write_csv(out / "kappa_map.csv", ("half_gap_um", "offset_um", "kappa_H_per_um", "kappa_V_per_um"), rows)
    write_legend(out / "sweep.legend.txt", {
        "kappa_map.csv": "coupling at 1 V over the (a, d) electrode grid, a-major order",
    })
    return [path]


# ---------------------------------------------------------------- spdc

@dataclass(frozen=True, eq=False)
class SpdcResult:
    model: SourceModel
    spectra: tuple
    w: float
    v: float
    phase_matched: dict[int, float]


def source_config(cfg: RunConfig) -> QpmSourceConfig:
    return QpmSourceConfig(
        pump_wavelength=cfg.pump_wavelength,
        qpm_period=cfg["spdc.qpm_period"],
        crystal_length=float(cfg["spdc.crystal_length"]),
        geometry=cfg.geometry("source_section"),
        center_signal=float(cfg["wavelengths.signal"]),
        half_window=float(cfg["spdc.half_window"]),
        nodes=int(cfg["spdc.nodes"]),
        spacing=float(cfg["spdc.spacing"]),
        margin=float(cfg["solver.margin"]),
    )


def compute_spdc(cfg: RunConfig) -> SpdcResult:
    with stage("spdc/config"):
        model = SourceModel(source_config(cfg))
    with stage("spdc/modes"):
        model.mismatch(1, model.signal_nodes[0])
    with stage("spdc/spectrum"):
        grid = np.linspace(model.signal_nodes[0], model.signal_nodes[-1], int(cfg["spdc.grid_points"]))
        spectra = tuple(process_spectrum(model, pid, grid) for pid in PROCESSES)
        w, v = estimate_wv(*spectra)
        matched = {pid: model.phase_matched_signal(pid) for pid in PROCESSES}
    return SpdcResult(model, spectra, w, v, matched)


def spdc_record(res: SpdcResult) -> dict:
    lp = res.model.cfg.pump_wavelength
    procs = {}
    for spec in res.spectra:
        ls = spec.peak_wavelength
        li = idler_wavelength(lp, ls)
        procs[str(spec.process_id)] = {
            "peak_signal_um": ls,
            "peak_idler_um": li,
            "phase_matched_signal_um": res.phase_matched[spec.process_id],
            "peak_intensity": float(spec.intensity.max()),
            "energy_residual": abs(1 / lp - 1 / ls - 1 / li) * lp,
        }
    return {
        "pump_um": lp,
        "qpm_period_um": res.model.qpm_period,
        "crystal_length_um": res.model.cfg.crystal_length,
        "processes": procs,
        "w": res.w,
        "v": res.v,
        "positivity_bound": math.sqrt(res.w * (1 - res.w)),
    }


def write_spdc(res: SpdcResult, out: Path) -> list[Path]:
    s1, s2 = res.spectra
    lam = s1.signal_wavelengths
    li = idler_wavelength(res.model.cfg.pump_wavelength, lam)
    norm = max(s1.intensity.max(), s2.intensity.max())
    rows = zip(lam, li, s1.intensity / norm, s2.intensity / norm)
    paths = [
        write_csv(out / "spectrum.csv", ("signal_um", "idler_um", "intensity_1", "intensity_2"), rows),
        write_json(out / "spdc.json", spdc_record(res)),
    ]
    write_legend(out / "spdc.legend.txt", {
        "spectrum.csv": "process intensities against signal wavelength, normalized to the larger peak; "
                        "idler from energy conservation",
        "spdc.json": "pump, poling period, peak wavelengths per process and the estimated (w, v)",
    })
    return paths


# ---------------------------------------------------------------- chsh

def compute_chsh(cfg: RunConfig) -> tuple[dict, ChshResult]:
    """Optimized CHSH settings for the configured or estimated source state."""
    w, v = cfg["chsh.w"], cfg["chsh.v"]
    origin = "config"
    if w is None:
        res = compute_spdc(cfg)
        w, v, origin = res.w, res.v, "estimated"
    with stage("chsh/state"):
        state = build_density_matrix(float(w), float(v))
    with stage("chsh/optimize"):
        result = optimize_settings(state)
    if cfg["chsh.voltages"]:
        design = compute_design(cfg)
        with stage("chsh/voltages"):
            result = result.with_voltages(design.H.design, design.V.design)
    record = chsh_record(state.w, state.v, result, analytic_planar_bound(state))
    record["state_origin"] = origin
    return record, result


def chsh_record(w: float, v: float, result: ChshResult, bound: float | None = None) -> dict:
    names = ("theta1", "theta1p", "theta2", "theta2p")
    e = result.correlations
    rec = {
        "w": w,
        "v": v,
        "settings_deg": dict(zip(names, result.settings.degrees())),
        "correlations": {
            "E(theta1,theta2)": e[0],
            "E(theta1p,theta2)": e[1],
            "E(theta1p,theta2p)": e[2],
            "E(theta1,theta2p)": e[3],
        },
        "S": result.s_value,
        "tsirelson": TSIRELSON,
        "voltages_V": None if result.voltages is None else dict(zip(names, result.voltages)),
    }
    if bound is not None:
        rec["analytic_planar_bound"] = bound
    return rec


def write_chsh(record: dict, out: Path) -> list[Path]:
    path = write_json(out / "chsh.json", record)
    write_legend(out / "chsh.legend.txt", {
        "chsh.json": "state (w, v), optimized analyzer angles in degrees (theta1, theta1p for H; "
                     "theta2, theta2p for V), correlations, S and drive voltages",
    })
    return [path]
