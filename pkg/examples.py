#!/usr/bin/env python3
"""
cprlab Examples

This script shows how to use individual components of cprlab.
"""

import warnings
warnings.filterwarnings('ignore')

import numpy as np

from cprlab import (
    BabbsParams,
    CorruptionConfig,
    CprProtocol,
    PatientProfile,
    correlation_matrix,
    corrupt_session,
    hemodynamics,
    nlms_denoise,
    psnr_db,
    snr_db,
    synthesize_session,
)
from cprlab.denoiser import build_model


def example_hemodynamics():
    """Example of the Babbs pressure laws"""
    print("🫀 Hemodynamics Example")
    print("-" * 30)

    protocol = CprProtocol()
    params = BabbsParams()
    for depth in (0.0, 20.0, 50.0):
        state = hemodynamics(depth, protocol, params)
        print(f"Depth {depth:4.0f} mm: E={state.e:.3f}  F={state.f:.4f}  "
              f"DBP={state.dbp:.2f}  CPP={state.cpp:.2f}")
    print()


def example_synthesis():
    """Example of synthesizing one clean session"""
    print("📁 Synthesis Example")
    print("-" * 30)

    session = synthesize_session(PatientProfile(), CprProtocol(n_cycles=10))
    print(f"Patient: {session.patient_id}, {session.length} samples at {session.sample_rate:g} Hz")
    print(session.channels.describe().loc[['mean', 'min', 'max']].round(3).to_string())
    print("\nChannel correlations:")
    print(correlation_matrix(session).round(2).to_string())
    print()


def example_corruption():
    """Example of artifact injection with an event log"""
    print("🔧 Corruption Example")
    print("-" * 30)

    clean = synthesize_session(PatientProfile(), CprProtocol(n_cycles=10))
    events = {}
    noisy = corrupt_session(clean, CorruptionConfig(seed=7), event_log=events)

    kinds = {}
    for event in events['pressure']:
        kinds[event.kind] = kinds.get(event.kind, 0) + 1
    print(f"Pressure events: {kinds}")
    print(f"Dropped samples: {int(np.isnan(noisy.to_array()).sum())}")
    reference, corrupted = clean.channel('pressure'), noisy.channel('pressure')
    gaps = np.isnan(corrupted)
    corrupted[gaps] = reference[gaps]
    print(f"Pressure SNR outside dropouts: {snr_db(reference, corrupted):.2f} dB")
    print()


def example_nlms():
    """Example of the NLMS baseline on a noisy sine"""
    print("📉 NLMS Example")
    print("-" * 30)

    t = np.arange(2000) / 100.0
    clean = np.sin(2 * np.pi * 1.5 * t)
    noisy = clean + 0.2 * np.random.default_rng(0).standard_normal(t.size)
    estimate = nlms_denoise(noisy)
    print(f"Noisy SNR:    {snr_db(clean, noisy):.2f} dB, PSNR {psnr_db(clean, noisy):.2f} dB")
    print(f"Filtered SNR: {snr_db(clean, estimate):.2f} dB, PSNR {psnr_db(clean, estimate):.2f} dB")
    print()


def example_model():
    """Example of building the denoiser"""
    print("🧠 Model Example")
    print("-" * 30)

    model = build_model(seed=0)
    print(f"Window: {model.window}, stride: {model.stride}")
    print(f"Trainable parameters: {model.parameter_count():,}")
    print(model.per_channel['pressure'])
    print()


if __name__ == "__main__":
    print("cprlab Examples")
    print("=" * 50)

    try:
        example_hemodynamics()
        example_synthesis()
        example_corruption()
        example_nlms()
        example_model()

        print("✅ All examples completed successfully!")

    except Exception as e:
        print(f"❌ Error running examples: {e}")
        print("Make sure all required packages are installed:")
        print("pip install -r requirements.txt")
