from .burgers import BurgersSpec, make_lf_burgers, sample_burgers_ic, simulate_burgers
from .darcy import DarcySpec, sample_darcy_permeability, solve_darcy
from .kolmogorov import KolmogorovSpec, sample_vorticity_ic, simulate_kolmogorov
from .dataset import DatasetManifest, gen_dataset, load_manifest, make_lf_interp

__all__ = [
    "BurgersSpec",
    "DarcySpec",
    "KolmogorovSpec",
    "DatasetManifest",
    "gen_dataset",
    "load_manifest",
    "make_lf_burgers",
    "make_lf_interp",
    "sample_burgers_ic",
    "sample_darcy_permeability",
    "sample_vorticity_ic",
    "simulate_burgers",
    "simulate_kolmogorov",
]
