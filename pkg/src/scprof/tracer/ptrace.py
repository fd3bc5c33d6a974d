"""Thin ctypes bindings for the handful of ptrace requests the tracer uses."""
from __future__ import annotations

import ctypes
import errno
import os

PTRACE_TRACEME = 0
PTRACE_PEEKUSER = 3
PTRACE_CONT = 7
PTRACE_SYSCALL = 24
PTRACE_SETOPTIONS = 0x4200
PTRACE_GETEVENTMSG = 0x4201
PTRACE_GET_SYSCALL_INFO = 0x420E

PTRACE_O_TRACESYSGOOD = 0x01
PTRACE_O_TRACEFORK = 0x02
PTRACE_O_TRACEVFORK = 0x04
PTRACE_O_TRACECLONE = 0x08
PTRACE_O_TRACEEXEC = 0x10
PTRACE_O_TRACEEXIT = 0x40
PTRACE_O_EXITKILL = 0x100000

PTRACE_EVENT_FORK = 1
PTRACE_EVENT_VFORK = 2
PTRACE_EVENT_CLONE = 3
PTRACE_EVENT_EXEC = 4
PTRACE_EVENT_EXIT = 6

PTRACE_SYSCALL_INFO_NONE = 0
PTRACE_SYSCALL_INFO_ENTRY = 1
PTRACE_SYSCALL_INFO_EXIT = 2
PTRACE_SYSCALL_INFO_SECCOMP = 3

WALL = 0x40000000

# offsetof(struct user_regs_struct, orig_rax) on x86_64
_ORIG_RAX_OFFSET = 15 * 8

_libc = ctypes.CDLL(None, use_errno=True)
_ptrace = _libc.ptrace
_ptrace.restype = ctypes.c_long
_ptrace.argtypes = [ctypes.c_long, ctypes.c_long, ctypes.c_void_p, ctypes.c_void_p]


class _Entry(ctypes.Structure):
    _fields_ = [("nr", ctypes.c_uint64), ("args", ctypes.c_uint64 * 6)]


class _Exit(ctypes.Structure):
    _fields_ = [("rval", ctypes.c_int64), ("is_error", ctypes.c_uint8)]


class _Seccomp(ctypes.Structure):
    _fields_ = [("nr", ctypes.c_uint64), ("args", ctypes.c_uint64 * 6), ("ret_data", ctypes.c_uint32)]


class _Data(ctypes.Union):
    _fields_ = [("entry", _Entry), ("exit", _Exit), ("seccomp", _Seccomp)]


class SyscallInfo(ctypes.Structure):
    _fields_ = [
        ("op", ctypes.c_uint8),
        ("pad", ctypes.c_uint8 * 3),
        ("arch", ctypes.c_uint32),
        ("instruction_pointer", ctypes.c_uint64),
        ("stack_pointer", ctypes.c_uint64),
        ("data", _Data),
    ]


def _call(request, pid=0, addr=None, data=None):
    ctypes.set_errno(0)
    res = _ptrace(request, pid, addr, data)
    if res == -1:
        err = ctypes.get_errno()
        if err:
            raise OSError(err, f"ptrace({request:#x}, {pid}): {os.strerror(err)}")
    return res


def traceme():
    _call(PTRACE_TRACEME)


def setoptions(pid: int, options: int):
    _call(PTRACE_SETOPTIONS, pid, None, ctypes.c_void_p(options))


def resume(pid: int, sig: int = 0, request: int = PTRACE_SYSCALL) -> bool:
    """Restart a stopped tracee; False if it vanished in the meantime."""
    try:
        _call(request, pid, None, ctypes.c_void_p(sig))
    except OSError as exc:
        if exc.errno == errno.ESRCH:
            return False
        raise
    return True


def geteventmsg(pid: int) -> int:
    msg = ctypes.c_ulong(0)
    _call(PTRACE_GETEVENTMSG, pid, None, ctypes.byref(msg))
    return msg.value


_have_syscall_info = True


def get_syscall_info(pid: int) -> tuple[int, int, int | None]:
    """Return ``(op, audit_arch, nr)`` for a syscall stop.

    ``nr`` is only known at entry.  Kernels older than 5.3 lack the request;
    there ``op`` comes back as NONE and the number is read from orig_rax.
    """
    global _have_syscall_info
    if _have_syscall_info:
        info = SyscallInfo()
        try:
            _call(PTRACE_GET_SYSCALL_INFO, pid, ctypes.c_void_p(ctypes.sizeof(info)), ctypes.byref(info))
        except OSError as exc:
            if exc.errno != errno.EIO:
                raise
            _have_syscall_info = False
        else:
            nr = info.data.entry.nr if info.op in (PTRACE_SYSCALL_INFO_ENTRY, PTRACE_SYSCALL_INFO_SECCOMP) else None
            return info.op, info.arch, nr
    nr = _call(PTRACE_PEEKUSER, pid, ctypes.c_void_p(_ORIG_RAX_OFFSET), None)
    return PTRACE_SYSCALL_INFO_NONE, 0, nr
