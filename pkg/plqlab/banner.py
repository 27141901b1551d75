"""plqlab banner and console branding."""

from rich.console import Console

from . import __version__
from .constants import COLORMAP_ID

# ── Logo ───────────────────────────────────────────────
LOGO = r"""
  [red]       _       [/][yellow]_       [/][green]_       _    [/]
  [red] _ __ | | __ _[/][yellow]| | __ _[/][green]| |__   [/]
  [red]| '_ \| |/ _` [/][yellow]| |/ _` [/][green]| '_ \  [/]
  [red]| |_) | | (_| [/][yellow]| | (_| [/][green]| |_) | [/]
  [red]| .__/|_|\__, [/][yellow]|_|\__,_[/][green]|_.__/  [/]
  [red]|_|         |_|[/]
"""

TAGLINE = "  [dim]Which pixels make a face recognizable.[/]"

# Inline heat strip: the three anchor colors of the ryg-v1 colormap
COMPACT_LOGO = "  [bold red]▮[/][bold yellow]▮[/][bold green]▮[/]  [bold]plqlab[/]"
DIVIDER = "  [dim]" + "─" * 41 + "[/]"


def print_banner(console: Console, compact: bool = False) -> None:
    """Logo, or the one-line heat strip, followed by the version."""
    lines = [COMPACT_LOGO] if compact else [LOGO, TAGLINE]
    console.print()
    for line in lines:
        console.print(line)
    console.print(f"  [dim]v{__version__} · heatmap {COLORMAP_ID}[/]")
    console.print()


def print_divider(console: Console) -> None:
    console.print(DIVIDER)


def status_icon(ok: bool) -> str:
    """Green or red cell, the two ends of the heatmap."""
    return "[green]■[/]" if ok else "[red]■[/]"
