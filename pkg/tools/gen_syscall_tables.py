#!/usr/bin/env python3
"""Regenerate src/scprof/tables/*.tbl from the host's kernel UAPI headers.

Each output line is "<number> <name>", sorted by number.
"""
import re
import subprocess
import sys
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "scprof" / "tables"
NR_RE = re.compile(r"^#define\s+__NR_(\w+)\s+(\d+)\s*$")

# aarch64 has no arch-specific unistd; it is the generic table plus these knobs
AARCH64_WANTS = [
    "__ARCH_WANT_RENAMEAT",
    "__ARCH_WANT_NEW_STAT",
    "__ARCH_WANT_SET_GET_RLIMIT",
    "__ARCH_WANT_TIME32_SYSCALLS",
    "__ARCH_WANT_SYS_CLONE3",
    "__ARCH_WANT_MEMFD_SECRET",
]


def from_header(path):
    table = {}
    for line in Path(path).read_text().splitlines():
        m = NR_RE.match(line)
        if m:
            table[int(m.group(2))] = m.group(1)
    return table


def generic_64():
    src = "#include <asm-generic/unistd.h>\n"
    cmd = ["cc", "-E", "-dM", "-D__BITS_PER_LONG=64", "-x", "c", "-"]
    cmd[3:3] = ["-D" + w for w in AARCH64_WANTS]
    out = subprocess.run(cmd, input=src, capture_output=True, text=True, check=True).stdout
    macros = {}
    for line in out.splitlines():
        parts = line.split(None, 2)
        if len(parts) == 3 and parts[0] == "#define":
            macros[parts[1]] = parts[2].strip()

    def resolve(value, depth=0):
        value = value.strip("() ")
        if value.isdigit():
            return int(value)
        if depth < 8 and value in macros:
            return resolve(macros[value], depth + 1)
        return None

    table = {}
    for name, value in macros.items():
        if name.startswith("__NR_") and not name.startswith("__NR3264"):
            nr = resolve(value)
            if nr is not None and name != "__NR_syscalls":
                table[nr] = name[len("__NR_"):]
    return table


def write(arch, table):
    lines = [f"{nr} {name}" for nr, name in sorted(table.items())]
    (OUT / f"{arch}.tbl").write_text("\n".join(lines) + "\n")
    print(f"{arch}: {len(lines)} entries")


def main():
    inc = Path("/usr/include/x86_64-linux-gnu/asm")
    write("x86_64", from_header(inc / "unistd_64.h"))
    write("i386", from_header(inc / "unistd_32.h"))
    write("aarch64", generic_64())
    return 0


if __name__ == "__main__":
    sys.exit(main())
