"""Syscall number to name lookup, one table per architecture.

Tables live in ``tables/<arch>.tbl`` as ``<number> <name>`` lines and are
regenerated from kernel UAPI headers by ``tools/gen_syscall_tables.py``.
"""
from __future__ import annotations

import functools
import platform
from importlib import resources

# AUDIT_ARCH_* values reported by PTRACE_GET_SYSCALL_INFO
AUDIT_ARCH = {
    0xC000003E: "x86_64",
    0x40000003: "i386",
    0xC00000B7: "aarch64",
}

_ALIASES = {"amd64": "x86_64", "x86-64": "x86_64", "arm64": "aarch64", "i686": "i386", "x86": "i386"}


def normalize_arch(arch: str) -> str:
    arch = arch.lower()
    return _ALIASES.get(arch, arch)


def host_arch() -> str:
    return normalize_arch(platform.machine())


def supported_archs() -> list[str]:
    files = resources.files(__package__).joinpath("tables").iterdir()
    return sorted(f.name[:-4] for f in files if f.name.endswith(".tbl"))


@functools.lru_cache(maxsize=None)
def load_table(arch: str) -> dict[int, str]:
    arch = normalize_arch(arch)
    path = resources.files(__package__).joinpath("tables", f"{arch}.tbl")
    if not path.is_file():
        raise ValueError(f"no syscall table for architecture {arch!r}")
    table = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        nr, name = line.split()
        table[int(nr)] = name
    return table


@functools.lru_cache(maxsize=None)
def _reverse(arch: str) -> dict[str, int]:
    return {name: nr for nr, name in load_table(arch).items()}


def syscall_name(arch: str, number: int) -> str:
    """Canonical lowercase name, or ``sys_<number>`` when the table has no entry."""
    return load_table(arch).get(number, f"sys_{number}")


def syscall_number(arch: str, name: str) -> int:
    return _reverse(normalize_arch(arch))[name]


# syscalls that never return to the caller on success
NO_RETURN = frozenset({"exit", "exit_group"})
