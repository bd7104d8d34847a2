import io
import math

import numpy as np
import pandas as pd

from .dataset import CHANNELS, write_atomic


class DenoisingAnalytics:
    """Comparison tables, insights and CSV exports for a set of EvalReports"""

    def __init__(self, reports=None):
        self.reports = list(reports or [])

    def calculate_kpis(self, report):
        """Headline numbers for one method"""
        return {
            'Aggregate SNR (dB)': report.aggregate_snr_db,
            'Aggregate PSNR (dB)': report.aggregate_psnr_db,
            'Correlation Similarity (noisy vs denoised)': report.corr_similarity,
            'Correlation Similarity (clean vs noisy)': report.similarity_clean_noisy,
            'Correlation Similarity (clean vs denoised)': report.similarity_clean_denoised,
            'Best Channel': max(report.per_channel, key=lambda ch: report.per_channel[ch]['snr_db']),
            'Worst Channel': min(report.per_channel, key=lambda ch: report.per_channel[ch]['snr_db']),
        }

    def comparison_table(self, reports=None):
        """One row per method, one SNR and one PSNR column per channel plus aggregates"""
        rows = []
        for report in reports or self.reports:
            row = {'method': report.method, 'stand_in': report.stand_in}
            for ch in CHANNELS:
                row[f'{ch}_snr_db'] = report.per_channel[ch]['snr_db']
                row[f'{ch}_psnr_db'] = report.per_channel[ch]['psnr_db']
            row['aggregate_snr_db'] = report.aggregate_snr_db
            row['aggregate_psnr_db'] = report.aggregate_psnr_db
            row['corr_similarity'] = report.corr_similarity
            row['similarity_clean_denoised'] = report.similarity_clean_denoised
            rows.append(row)
        return pd.DataFrame(rows).set_index('method')

    def generate_insights(self, reports=None):
        """Readable observations about the ranking and the correlation structure"""
        reports = list(reports or self.reports)
        if not reports:
            return []
        insights = []

        ranked = sorted(reports, key=lambda r: r.aggregate_snr_db, reverse=True)
        best = ranked[0]
        insights.append(f"🏆 '{best.method}' has the highest aggregate SNR ({best.aggregate_snr_db:.2f} dB).")
        for other in ranked[1:]:
            gap = best.aggregate_snr_db - other.aggregate_snr_db
            insights.append(f"📊 '{best.method}' leads '{other.method}' by {gap:.2f} dB aggregate SNR.")

        for report in reports:
            before = report.similarity_clean_noisy
            after = report.similarity_clean_denoised
            if math.isnan(before) or math.isnan(after):
                continue
            if after > before:
                insights.append(
                    f"✅ '{report.method}' moves the channel correlations towards the clean ones "
                    f"({before:.3f} → {after:.3f})."
                )
            else:
                insights.append(
                    f"⚠️ '{report.method}' does not restore the clean correlation structure "
                    f"({before:.3f} → {after:.3f})."
                )

        for report in reports:
            weakest = min(report.per_channel, key=lambda ch: report.per_channel[ch]['snr_db'])
            insights.append(
                f"🔍 '{report.method}' is weakest on '{weakest}' "
                f"({report.per_channel[weakest]['snr_db']:.2f} dB)."
            )

        stand_ins = [r.method for r in reports if r.stand_in]
        if stand_ins:
            insights.append(f"ℹ️ {', '.join(stand_ins)} are stand-in baselines, not the published comparison methods.")
        return insights

    def scores_frame(self, reports=None):
        rows = [
            {'method': r.method, 'channel': ch, 'snr_db': r.per_channel[ch]['snr_db'],
             'psnr_db': r.per_channel[ch]['psnr_db']}
            for r in reports or self.reports for ch in CHANNELS
        ]
        return pd.DataFrame(rows, columns=['method', 'channel', 'snr_db', 'psnr_db'])

    def correlations_frame(self, reports=None):
        """Long-format correlation entries: method, stage, row, col, r"""
        rows = []
        for r in reports or self.reports:
            stages = {'before': r.corr_before, 'after': r.corr_after, 'clean': r.corr_clean}
            for stage, matrix in stages.items():
                if matrix is None:
                    continue
                values = np.asarray(matrix)
                for i, a in enumerate(CHANNELS):
                    for j, b in enumerate(CHANNELS):
                        rows.append({'method': r.method, 'stage': stage, 'row': a, 'col': b, 'r': values[i, j]})
        return pd.DataFrame(rows, columns=['method', 'stage', 'row', 'col', 'r'])

    @staticmethod
    def _csv(frame):
        buffer = io.StringIO()
        frame.to_csv(buffer, index=False, lineterminator="\n")
        return buffer.getvalue()

    def export_scores_csv(self, filename="scores.csv", reports=None):
        frame = self.scores_frame(reports)
        write_atomic(filename, self._csv(frame))
        return frame

    def export_correlations_csv(self, filename="correlations.csv", reports=None):
        frame = self.correlations_frame(reports)
        write_atomic(filename, self._csv(frame))
        return frame

    def print_analysis_summary(self, reports=None):
        reports = list(reports or self.reports)

        print("=" * 60)
        print("CPR DENOISING COMPARISON REPORT")
        print("=" * 60)

        for report in reports:
            label = f"{report.method} (stand-in)" if report.stand_in else report.method
            print(f"\n📊 {label.upper()}:")
            print("-" * 40)
            for kpi, value in self.calculate_kpis(report).items():
                print(f"{kpi}: {value:.3f}" if isinstance(value, float) else f"{kpi}: {value}")

        print("\n🔍 KEY INSIGHTS:")
        print("-" * 40)
        for insight in self.generate_insights(reports):
            print(f"• {insight}")

        print("\n📈 PER-CHANNEL SCORES:")
        print("-" * 40)
        print(self.comparison_table(reports).round(2).to_string())

        print("\n" + "=" * 60)
        print("END OF REPORT")
        print("=" * 60)
