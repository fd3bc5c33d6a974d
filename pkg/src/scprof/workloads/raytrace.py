"""Small deterministic sphere raytracer.

Reads a key/value scene file, renders rows in parallel (row ``j`` goes to
thread ``j % threads``) and writes a binary PPM.  Sub-pixel jitter is a hash
of ``(seed, x, y, sample)`` so the image does not depend on the thread count.
Imports are kept to a minimum: this runs as a traced child process and every
module loaded at startup shows up as syscalls.
"""
from __future__ import annotations

import argparse
import math
import sys
import threading

DEFAULT_SCENE = """\
# camera sits at the origin looking down +z
seed = 2023
fov = 60
background = 0.55 0.70 0.90
ambient = 0.08
light = 4.0 6.0 -2.0
# sphere = cx cy cz radius r g b
sphere = 0.0 0.0 3.0 0.5 0.90 0.25 0.20
sphere = 1.15 -0.15 3.6 0.35 0.20 0.75 0.30
sphere = -1.1 0.1 4.0 0.6 0.25 0.35 0.90
sphere = 0.0 -1000.5 3.0 1000.0 0.75 0.75 0.70
"""


class Sphere:
    __slots__ = ("center", "radius", "color")

    def __init__(self, center, radius, color):
        self.center = center
        self.radius = radius
        self.color = color


class Scene:
    def __init__(self):
        self.seed = 2023
        self.fov = 60.0
        self.background = (0.55, 0.70, 0.90)
        self.ambient = 0.08
        self.light = (4.0, 6.0, -2.0)
        self.spheres = []


_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def jitter(seed: int, x: int, y: int, sample: int) -> tuple[float, float]:
    """Two offsets in [0, 1) that depend only on the pixel and sample index."""
    h = _splitmix64((((seed * 1_000_003 + y) * 1_000_003 + x) * 1_000_003 + sample) & _MASK)
    return (h >> 40) / float(1 << 24), ((h >> 16) & 0xFFFFFF) / float(1 << 24)


def parse_scene(text: str) -> Scene:
    scene = Scene()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"scene line {lineno}: expected key = value")
        key = key.strip()
        nums = [float(v) for v in value.split()]
        if key == "seed":
            scene.seed = int(nums[0])
        elif key == "fov":
            scene.fov = nums[0]
        elif key == "ambient":
            scene.ambient = nums[0]
        elif key in ("background", "light"):
            if len(nums) != 3:
                raise ValueError(f"scene line {lineno}: {key} needs 3 numbers")
            setattr(scene, key, tuple(nums))
        elif key == "sphere":
            if len(nums) != 7:
                raise ValueError(f"scene line {lineno}: sphere needs 7 numbers")
            scene.spheres.append(Sphere(tuple(nums[:3]), nums[3], tuple(nums[4:])))
        else:
            raise ValueError(f"scene line {lineno}: unknown key {key!r}")
    return scene


def _hit(scene, ox, oy, oz, dx, dy, dz, t_min=1e-6):
    """Nearest (t, sphere) along a unit-direction ray, or (inf, None)."""
    best_t, best = math.inf, None
    for s in scene.spheres:
        cx, cy, cz = s.center
        lx, ly, lz = ox - cx, oy - cy, oz - cz
        b = lx * dx + ly * dy + lz * dz
        c = lx * lx + ly * ly + lz * lz - s.radius * s.radius
        disc = b * b - c
        if disc < 0.0:
            continue
        root = math.sqrt(disc)
        t = -b - root
        if t < t_min:
            t = -b + root
        if t_min <= t < best_t:
            best_t, best = t, s
    return best_t, best


def shade(scene: Scene, dx: float, dy: float, dz: float) -> tuple[float, float, float]:
    """Colour seen along a primary ray from the camera (unit direction)."""
    t, s = _hit(scene, 0.0, 0.0, 0.0, dx, dy, dz)
    if s is None:
        return scene.background
    px, py, pz = t * dx, t * dy, t * dz
    cx, cy, cz = s.center
    nx, ny, nz = (px - cx) / s.radius, (py - cy) / s.radius, (pz - cz) / s.radius
    lx, ly, lz = scene.light[0] - px, scene.light[1] - py, scene.light[2] - pz
    dist = math.sqrt(lx * lx + ly * ly + lz * lz)
    lx, ly, lz = lx / dist, ly / dist, lz / dist
    diffuse = max(0.0, nx * lx + ny * ly + nz * lz)
    if diffuse > 0.0:
        eps = 1e-4
        st, blocker = _hit(scene, px + nx * eps, py + ny * eps, pz + nz * eps, lx, ly, lz)
        if blocker is not None and st < dist:
            diffuse = 0.0
    k = scene.ambient + (1.0 - scene.ambient) * diffuse
    return (s.color[0] * k, s.color[1] * k, s.color[2] * k)


def to_byte(c: float) -> int:
    c = min(1.0, max(0.0, c))
    return int(c ** (1.0 / 2.2) * 255.0 + 0.5)


def camera_ray(scene, width, height, x, y, jx=0.5, jy=0.5):
    scale = math.tan(math.radians(scene.fov) / 2.0)
    aspect = width / height
    u = (2.0 * (x + jx) / width - 1.0) * aspect * scale
    v = (1.0 - 2.0 * (y + jy) / height) * scale
    n = math.sqrt(u * u + v * v + 1.0)
    return u / n, v / n, 1.0 / n


def render_row(scene: Scene, width: int, height: int, spp: int, y: int) -> bytes:
    out = bytearray()
    for x in range(width):
        if spp == 1:
            r, g, b = shade(scene, *camera_ray(scene, width, height, x, y))
        else:
            r = g = b = 0.0
            for k in range(spp):
                jx, jy = jitter(scene.seed, x, y, k)
                cr, cg, cb = shade(scene, *camera_ray(scene, width, height, x, y, jx, jy))
                r, g, b = r + cr, g + cg, b + cb
            r, g, b = r / spp, g / spp, b / spp
        out += bytes((to_byte(r), to_byte(g), to_byte(b)))
    return bytes(out)


def render(scene: Scene, width: int, height: int, spp: int = 1, threads: int = 1) -> bytes:
    """Full PPM (P6) image bytes."""
    if min(width, height, spp, threads) < 1:
        raise ValueError("width, height, spp and threads must be >= 1")
    rows: list = [None] * height

    def work(k):
        for y in range(k, height, threads):
            rows[y] = render_row(scene, width, height, spp, y)

    team = [threading.Thread(target=work, args=(k,)) for k in range(min(threads, height))]
    for t in team:
        t.start()
    for t in team:
        t.join()
    return f"P6\n{width} {height}\n255\n".encode() + b"".join(rows)


def run(scene_path: str | None, output: str, width: int, height: int, spp: int, threads: int) -> None:
    if scene_path:
        with open(scene_path, encoding="utf-8") as fh:
            scene = parse_scene(fh.read())
    else:
        scene = parse_scene(DEFAULT_SCENE)
    image = render(scene, width, height, spp, threads)
    with open(output, "wb") as fh:
        fh.write(image)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--scene")
    p.add_argument("--output", required=True)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=192)
    p.add_argument("--spp", type=int, default=4)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)
    run(args.scene, args.output, args.width, args.height, args.spp, args.threads)
    return 0


if __name__ == "__main__":
    sys.exit(main())
