"""Quasi-convex analysis and subequation potential theory on grid functions."""

__version__ = "0.1.0"

from .grid import (NEG_INF, Box, GridError, GridMask, GridSpec, ScalarField, build_field,
                   mask_measure, numeric_jet, read_field, read_mask, write_field, write_mask)
from .jets import Jet2, eig_sym, loewner_geq, quad_form
from .convex import (biconjugate, c11_check, fenchel_conjugate, grad_conjugate, magic_legendre_check,
                     quasiconvex_index, subdifferential)
from .regularize import inf_convolve, magic_transport_check, sup_convolve
from .contact import (ContactSet, StrictJetWitness, alexandrov_bound, contact_set, density_experiment,
                      jensen_slodkowski_verify, slod_K, summand_decompose, vertex_map_check)
from .subeq import JetSampler, Subequation, check_monotone, check_structure, dual, standard_library
from .potential import (BadJet, SubharmonicReport, check_subharmonic_ae, check_subharmonic_viscosity,
                        comparison_run, find_bad_test_jet, is_subaffine, on_sums_witness,
                        strict_comparison_run, subharmonic_addition_check)

__all__ = [
    "NEG_INF", "Box", "GridError", "GridMask", "GridSpec", "ScalarField", "build_field", "mask_measure",
    "numeric_jet", "read_field", "read_mask", "write_field", "write_mask",
    "Jet2", "eig_sym", "loewner_geq", "quad_form",
    "biconjugate", "c11_check", "fenchel_conjugate", "grad_conjugate", "magic_legendre_check",
    "quasiconvex_index", "subdifferential",
    "inf_convolve", "magic_transport_check", "sup_convolve",
    "ContactSet", "StrictJetWitness", "alexandrov_bound", "contact_set", "density_experiment",
    "jensen_slodkowski_verify", "slod_K", "summand_decompose", "vertex_map_check",
    "JetSampler", "Subequation", "check_monotone", "check_structure", "dual", "standard_library",
    "BadJet", "SubharmonicReport", "check_subharmonic_ae", "check_subharmonic_viscosity",
    "comparison_run", "find_bad_test_jet", "is_subaffine", "on_sums_witness",
    "strict_comparison_run", "subharmonic_addition_check",
]
