"""Image scoring, component detection and geometry for teardown photos.

The informativeness score is spectral: component-dense board shots carry
far more high-frequency energy than housings or marketing renders, so a
Gaussian high-pass over the centered 2D FFT separates them without any
learned weights. Detection is pluggable; the default is a classical
contour detector over the high-pass response.
"""

from __future__ import annotations

import json
import math
import subprocess
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import cv2
import numpy as np

from .core import InventoryEntry

SCORE_SIDE_PX = 512

HPF_CUTOFF_BINS = 32.0


def load_gray(image) -> np.ndarray:
    """Decode an image argument to a float grayscale array in [0, 1].

    Accepts a path, raw encoded bytes, or an ndarray (grayscale or BGR).
    Raises ValueError for anything that cannot be decoded.
    """
    if isinstance(image, np.ndarray):
        arr = image
        if arr.ndim == 3:
            arr = cv2.cvtColor(arr.astype(np.uint8), cv2.COLOR_BGR2GRAY)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("image array must be 2D (grayscale) or 3-channel")
        arr = arr.astype(np.float64)
        if arr.max() > 1.0:
            arr = arr / 255.0
        return arr
    if isinstance(image, (bytes, bytearray)):
        decoded = cv2.imdecode(np.frombuffer(bytes(image), np.uint8), cv2.IMREAD_GRAYSCALE)
        if decoded is None:
            raise ValueError("undecodable image bytes")
        return decoded.astype(np.float64) / 255.0
    if isinstance(image, (str, Path)):
        decoded = cv2.imread(str(image), cv2.IMREAD_GRAYSCALE)
        if decoded is None:
            raise ValueError(f"undecodable image file: {image}")
        return decoded.astype(np.float64) / 255.0
    raise ValueError(f"unsupported image argument of type {type(image).__name__}")


def _resize_max_side(gray: np.ndarray, side: int = SCORE_SIDE_PX) -> np.ndarray:
    h, w = gray.shape
    if max(h, w) == side:
        return gray
    scale = side / max(h, w)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    if w >= h:
        new_w = side
    else:
        new_h = side
    return cv2.resize(gray, (new_w, new_h), interpolation=cv2.INTER_AREA)


def hpf_score(image, cutoff: float = HPF_CUTOFF_BINS) -> float:
    """High-frequency energy of an image, normalized for comparability.

    The image is resized so its longer side is 512 px, transformed with a
    centered orthonormal 2D FFT, and its power weighted by the Gaussian
    high-pass mask H = 1 - exp(-D^2 / (2 cutoff^2)) where D is the
    distance from the DC bin. Power, not magnitude: it puts the score in
    Parseval terms, so detail above the cutoff raises the score even when
    spread over few strong harmonics. Constant images score 0 and
    brightness shifts only move the (fully masked) DC bin.
    """
    if not (math.isfinite(cutoff) and cutoff > 0):
        raise ValueError("cutoff must be finite and > 0")
    gray = _resize_max_side(load_gray(image))
    spectrum = np.fft.fftshift(np.fft.fft2(gray, norm="ortho"))
    h, w = gray.shape
    rows = np.arange(h) - h // 2
    cols = np.arange(w) - w // 2
    d2 = rows[:, None] ** 2 + cols[None, :] ** 2
    mask = 1.0 - np.exp(-d2 / (2.0 * cutoff * cutoff))
    return float(np.mean(np.abs(spectrum) ** 2 * mask))


@dataclass(frozen=True)
class Detection:
    """One detected component: class, pixel bbox, confidence, optional label."""

    component_class: str
    bbox_px: tuple[int, int, int, int]  # x, y, w, h
    confidence: float
    label_text: str | None = None

    def __post_init__(self):
        x, y, w, h = (int(v) for v in self.bbox_px)
        if w <= 0 or h <= 0:
            raise ValueError("bbox must have positive width and height")
        conf = float(self.confidence)
        if not (0.0 <= conf <= 1.0):
            raise ValueError("confidence must be in [0, 1]")
        object.__setattr__(self, "bbox_px", (x, y, w, h))
        object.__setattr__(self, "confidence", conf)

    def to_dict(self) -> dict:
        return {
            "class": self.component_class,
            "bbox": list(self.bbox_px),
            "confidence": self.confidence,
            "label_text": self.label_text,
        }

    @staticmethod
    def from_dict(data) -> "Detection":
        return Detection(
            component_class=data["class"],
            bbox_px=tuple(data["bbox"]),
            confidence=data["confidence"],
            label_text=data.get("label_text"),
        )


class ComponentDetector(Protocol):
    def detect(self, image) -> list[Detection]: ...


@dataclass(frozen=True)
class BlobDetector:
    """Contour detector over the local high-pass response. No learned weights.

    Components are enclosed regions whose |image - blur| response clears
    the threshold; the enclosed contour area drives a coarse class guess.
    Contours spanning most of the frame are the board outline, not a
    component, and are skipped.
    """

    blur_sigma: float = 3.0
    threshold: float = 0.12
    min_area_px: float = 16.0
    ic_area_px: float = 1200.0
    sensor_area_px: float = 300.0
    max_area_frac: float = 0.5

    def detect(self, image) -> list[Detection]:
        gray = load_gray(image)
        ksize = int(6 * self.blur_sigma + 1) | 1
        blurred = cv2.GaussianBlur(gray, (ksize, ksize), self.blur_sigma)
        response = np.abs(gray - blurred)
        mask = (response > self.threshold).astype(np.uint8)
        mask = cv2.morphologyEx(mask, cv2.MORPH_CLOSE, np.ones((3, 3), np.uint8))
        # two-level retrieval: blobs sitting inside another blob's hole
        # (components inside the board outline) stay at the top level
        contours, hierarchy = cv2.findContours(mask, cv2.RETR_CCOMP, cv2.CHAIN_APPROX_SIMPLE)
        frame_area = gray.shape[0] * gray.shape[1]
        detections: list[Detection] = []
        for i, contour in enumerate(contours):
            if hierarchy is not None and hierarchy[0][i][3] != -1:
                continue  # a hole boundary, not a component outline
            area = cv2.contourArea(contour)
            if area < self.min_area_px or area > self.max_area_frac * frame_area:
                continue
            x, y, w, h = cv2.boundingRect(contour)
            if area >= self.ic_area_px:
                cls = "IC"
            elif area >= self.sensor_area_px:
                cls = "sensor"
            else:
                cls = "passive"
            patch = response[y : y + h, x : x + w]
            confidence = float(min(1.0, patch.mean() / (2.0 * self.threshold)))
            detections.append(Detection(cls, (x, y, w, h), max(confidence, 0.0)))
        detections.sort(key=lambda det: (det.bbox_px[1], det.bbox_px[0], det.component_class))
        return detections


class ProcessDetector:
    """Adapter for an external detector process speaking JSON lines.

    Requests are {"image_path": ...}; the reply line must carry
    {"detections": [{"class", "bbox", "confidence", "label_text"}, ...]}.
    The child is spawned lazily and kept for the adapter's lifetime.
    """

    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        self._proc: subprocess.Popen | None = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def detect(self, image) -> list[Detection]:
        if isinstance(image, (str, Path)):
            path = str(image)
            cleanup = None
        else:
            gray = (load_gray(image) * 255.0).round().astype(np.uint8)
            tmp = tempfile.NamedTemporaryFile(suffix=".png", delete=False)
            cleanup = Path(tmp.name)
            tmp.close()
            cv2.imwrite(str(cleanup), gray)
            path = str(cleanup)
        try:
            proc = self._ensure()
            proc.stdin.write(json.dumps({"image_path": path}) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
            if not line:
                raise RuntimeError("detector process closed its output")
            reply = json.loads(line)
            return [Detection.from_dict(d) for d in reply["detections"]]
        finally:
            if cleanup is not None:
                cleanup.unlink(missing_ok=True)

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)


@dataclass(frozen=True)
class ImageScore:
    """Informativeness of one candidate view."""

    doc_id: str
    hf_energy: float
    hf_energy_normalized: float
    component_count: int
    lam: float
    combined: float

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "hf_energy": self.hf_energy,
            "hf_energy_normalized": self.hf_energy_normalized,
            "component_count": self.component_count,
            "lam": self.lam,
            "combined": self.combined,
        }


def rank_board_views(
    images: Sequence[tuple[str, object]],
    detector: ComponentDetector,
    lam: float = 1.0,
) -> tuple[list[ImageScore], list[tuple[str, str]]]:
    """Rank candidate views by component count plus weighted HF energy.

    hf_energy is min-max normalized across the candidate set (all-equal
    collapses to 0 so counts decide alone). Undecodable images are skipped
    and reported, not fatal. Ties break toward the smaller doc_id.
    """
    measured: list[tuple[str, float, int]] = []
    skipped: list[tuple[str, str]] = []
    for doc_id, image in images:
        try:
            energy = hpf_score(image)
            count = len(detector.detect(image))
        except ValueError as exc:
            skipped.append((doc_id, str(exc)))
            continue
        measured.append((doc_id, energy, count))
    if not measured:
        return [], skipped
    energies = [e for _, e, _ in measured]
    lo, hi = min(energies), max(energies)
    span = hi - lo
    scores = []
    for doc_id, energy, count in measured:
        normalized = (energy - lo) / span if span > 0 else 0.0
        scores.append(
            ImageScore(
                doc_id=doc_id,
                hf_energy=energy,
                hf_energy_normalized=normalized,
                component_count=count,
                lam=lam,
                combined=count + lam * normalized,
            )
        )
    scores.sort(key=lambda s: (-s.combined, s.doc_id))
    return scores, skipped


@dataclass(frozen=True)
class ScaleCalibration:
    """Pixel pitch derived from one component of known physical size."""

    mm_per_px: float
    reference: tuple[str, float, float, tuple[int, int, int, int]]

    def __post_init__(self):
        if not (math.isfinite(self.mm_per_px) and self.mm_per_px > 0):
            raise ValueError("mm_per_px must be finite and > 0")

    def to_dict(self) -> dict:
        ref_id, w_mm, h_mm, bbox = self.reference
        return {
            "mm_per_px": self.mm_per_px,
            "reference": {"id": ref_id, "known_w_mm": w_mm, "known_h_mm": h_mm, "bbox_px": list(bbox)},
        }


def calibrate_scale(
    ref_known_mm: tuple[float, float],
    ref_bbox_px: tuple[int, int, int, int],
    ref_id: str = "reference",
) -> ScaleCalibration:
    """mm/px from a known-size reference part; warns on anisotropy > 10%."""
    known_w, known_h = (float(v) for v in ref_known_mm)
    x, y, w, h = (int(v) for v in ref_bbox_px)
    if known_w <= 0 or known_h <= 0:
        raise ValueError("known reference dimensions must be positive")
    if w <= 0 or h <= 0:
        raise ValueError("reference bbox must have positive width and height")
    ratio_w = known_w / w
    ratio_h = known_h / h
    if max(ratio_w, ratio_h) / min(ratio_w, ratio_h) - 1.0 > 0.10:
        warnings.warn(
            f"axis scale ratios differ by more than 10%: {ratio_w:.4g} vs {ratio_h:.4g} mm/px",
            stacklevel=2,
        )
    return ScaleCalibration(
        mm_per_px=(ratio_w + ratio_h) / 2.0,
        reference=(ref_id, known_w, known_h, (x, y, w, h)),
    )


def board_dimensions(
    board_bbox_px: tuple[int, int, int, int], cal: ScaleCalibration
) -> tuple[float, float, float]:
    """Physical (width_mm, height_mm, area_mm2) of a board bbox."""
    _, _, w, h = (int(v) for v in board_bbox_px)
    if w <= 0 or h <= 0:
        raise ValueError("board bbox must have positive width and height")
    w_mm = w * cal.mm_per_px
    h_mm = h * cal.mm_per_px
    return w_mm, h_mm, w_mm * h_mm


def find_board_bbox(image) -> tuple[int, int, int, int]:
    """Locate the board outline as the largest contour against the background.

    Polarity is inferred from the frame corners: whichever side of the Otsu
    split the corners sit on is treated as background.
    """
    gray = load_gray(image)
    as_u8 = (gray * 255.0).round().astype(np.uint8)
    _, binary = cv2.threshold(as_u8, 0, 255, cv2.THRESH_BINARY + cv2.THRESH_OTSU)
    corners = [binary[0, 0], binary[0, -1], binary[-1, 0], binary[-1, -1]]
    if np.mean(corners) > 127:
        binary = cv2.bitwise_not(binary)
    contours, _ = cv2.findContours(binary, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE)
    if not contours:
        raise ValueError("no board-like region found")
    largest = max(contours, key=cv2.contourArea)
    return tuple(int(v) for v in cv2.boundingRect(largest))


def inventory_from_detections(
    detections: Sequence[Detection],
    cal: ScaleCalibration,
    board_bbox_px: tuple[int, int, int, int],
) -> list[InventoryEntry]:
    """Turn detections into inventory entries plus one PCB area entry.

    The board entry comes first with quantity in mm2; each detection
    becomes a count-1 entry with measured physical size attributes.
    """
    w_mm, h_mm, area_mm2 = board_dimensions(board_bbox_px, cal)
    entries = [
        InventoryEntry(
            component_class="PCB",
            description="printed circuit board",
            quantity=area_mm2,
            unit="mm2",
            attributes={"w_mm": w_mm, "h_mm": h_mm},
        )
    ]
    for det in detections:
        _, _, w, h = det.bbox_px
        det_w = w * cal.mm_per_px
        det_h = h * cal.mm_per_px
        attributes = {
            "w_mm": det_w,
            "h_mm": det_h,
            "area_mm2": det_w * det_h,
            "confidence": det.confidence,
        }
        if det.label_text is not None:
            attributes["label_text"] = det.label_text
        entries.append(
            InventoryEntry(
                component_class=det.component_class,
                description=det.label_text or f"{det.component_class} {det_w:.1f}x{det_h:.1f} mm",
                quantity=1.0,
                unit="count",
                attributes=attributes,
            )
        )
    return entries
