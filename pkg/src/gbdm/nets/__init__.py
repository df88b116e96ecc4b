"""Learnable components: layers, encoders, vector fields and the model bundle."""

from gbdm.nets.encoders import Encoding, Gaussian, HistoryEncoder, PosteriorPair
from gbdm.nets.fields import ConvField, SecondOrderField, VectorField
from gbdm.nets.layers import GRU, MLP, Conv2d, Linear
from gbdm.nets.model import GreyBoxModel, build_model
from gbdm.nets.module import Module
from gbdm.nets.priors import DataStats, PriorSpec


__all__ = [
    "GRU",
    "MLP",
    "Conv2d",
    "ConvField",
    "DataStats",
    "Encoding",
    "Gaussian",
    "GreyBoxModel",
    "HistoryEncoder",
    "Linear",
    "Module",
    "PosteriorPair",
    "PriorSpec",
    "SecondOrderField",
    "VectorField",
    "build_model",
]
