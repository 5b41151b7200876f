"""
Run banner printed once per command.
"""

# Loguru colour tags; the banner is logged with literal=True so the formatter prints it as-is.

from frac_rbm.core.config import RunConfig


def get_ascii_banner() -> dict:
    """
    Generates a small coloured title block for the solver suite.
    """

    blue = "fg #3776AB"
    orange = "fg #e46e2e"
    banner_lines = [
        "",
        f"<{orange}>  ┏━╸┏━┓┏━┓┏━╸   </{orange}><{blue}>┏━┓┏┓ ┏┳┓</{blue}>",
        f"<{orange}>  ┣╸ ┣┳┛┣━┫┃     </{orange}><{blue}>┣┳┛┣┻┓┃┃┃</{blue}>",
        f"<{orange}>  ╹  ╹┗╸╹ ╹┗━╸   </{orange}><{blue}>╹┗╸┗━┛╹ ╹</{blue}>",
    ]

    return {"width": 59, "text": "\n".join(banner_lines)}


def get_run_banner(config: RunConfig, command: str) -> str:
    """
    Generates the banner with version, preset, mesh sizes and output directory.

    Args:
        config: Resolved run configuration.
        command: Name of the command being run.

    Returns:
        Formatted banner string with Loguru colour tags.
    """

    banner = get_ascii_banner()
    box_width = banner["width"] - 2

    version_str = f"Version {config.version}"
    centered_version = " " * ((banner["width"] - len(version_str)) // 2) + version_str

    lines = [
        f"command: {command}   preset: {config.preset}",
        f"mesh: n={config.n}  M={config.M}  gamma={config.gamma_d1:g}/{config.gamma_d2:g}  y+={config.y_plus:g}",
        f"rhs: {config.rhs}   greedy: {config.greedy_mode}   N_max={config.n_max}",
        f"output: {config.output_dir}",
    ]
    body = "\n".join(f"│ {line[: box_width - 2]:<{box_width - 2}} │" for line in lines)

    return f"""{banner['text']}
<magenta>{centered_version}</magenta>
╭{"─" * box_width}╮
{body}
╰{"─" * box_width}╯
"""
