"""Analytic per-pixel FLOPs accounting.

Convention: one multiply-accumulate is 2 FLOPs; convolutions cost
2*K^2*(C_in/groups)*C_out per output pixel; class-specific convolutions
cost the same as the plain conv they replace (class lookup is free);
activations, adds and resampling cost C per pixel; biases are excluded.
Layers running below full resolution are weighted by their area fraction.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

CONVENTION = (
    "MAC=2 FLOPs; conv 2*K^2*(C_in/groups)*C_out per px; CSConv as conv; "
    "activations/adds/resampling C per px; biases and class lookups free; "
    "sub-resolution layers scaled by area fraction"
)


@dataclass
class FlopsEntry:
    name: str
    flops_per_pixel: float  # already weighted by the layer's area fraction


@dataclass
class FlopsReport:
    entries: list
    convention: str = CONVENTION

    @property
    def total_flops_per_pixel(self) -> float:
        return sum(e.flops_per_pixel for e in self.entries)

    @property
    def total_kflops_per_pixel(self) -> float:
        return self.total_flops_per_pixel / 1000.0

    def format(self, title: str = "network") -> str:
        lines = [
            f"FLOPs report: {title}",
            f"convention: {self.convention}",
        ]
        for e in self.entries:
            lines.append(f"  {e.name:<24s} {e.flops_per_pixel:12.1f} FLOPs/px")
        lines.append(f"  {'total':<24s} {self.total_kflops_per_pixel:12.3f} kFLOPs/px")
        return "\n".join(lines)


def count_flops(net) -> FlopsReport:
    """Per-layer FLOPs/pixel for a built network, independent of weights."""
    if not hasattr(net, "flops_layers"):
        raise ConfigError(f"{type(net).__name__} does not expose a FLOPs layer walk")
    entries = [
        FlopsEntry(name, ppf * area) for name, ppf, area in net.flops_layers()
    ]
    return FlopsReport(entries=entries)
