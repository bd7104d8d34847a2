import numpy as np
import plotly.express as px
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from .dataset import CHANNELS, write_atomic


class DenoisingDashboard:
    def __init__(self):
        self.colors = ['#FF6B6B', '#4ECDC4', '#45B7D1', '#96CEB4', '#FFEAA7', '#DDA0DD']

    def create_loss_curve(self, history):
        """Training and validation loss per epoch"""
        frame = history.to_frame()
        fig = px.line(frame, x='epoch', y=['train_loss', 'val_loss'],
                      title="Training History",
                      labels={'value': 'Masked MAE', 'variable': 'Split'},
                      color_discrete_sequence=self.colors)
        if history.best_epoch:
            fig.add_vline(x=history.best_epoch, line_dash="dash",
                          annotation_text=f"Best epoch: {history.best_epoch}")
        return fig

    def create_method_comparison(self, reports):
        """Per-channel SNR and PSNR bars for every method"""
        fig = make_subplots(rows=1, cols=2, subplot_titles=('SNR (dB)', 'PSNR (dB)'))
        for i, report in enumerate(reports):
            color = self.colors[i % len(self.colors)]
            for col, key in enumerate(('snr_db', 'psnr_db'), start=1):
                fig.add_trace(go.Bar(x=list(CHANNELS),
                                     y=[report.per_channel[ch][key] for ch in CHANNELS],
                                     name=report.method, marker_color=color,
                                     showlegend=col == 1), row=1, col=col)
        fig.update_layout(barmode='group', title="Denoising Method Comparison")
        return fig

    def create_correlation_heatmaps(self, report):
        """Side-by-side channel correlation matrices (clean, noisy, denoised)"""
        panels = [('Clean', report.corr_clean), ('Noisy', report.corr_before), ('Denoised', report.corr_after)]
        panels = [(title, m) for title, m in panels if m is not None]
        fig = make_subplots(rows=1, cols=len(panels), subplot_titles=[t for t, _ in panels])
        for col, (_, matrix) in enumerate(panels, start=1):
            fig.add_trace(go.Heatmap(z=np.asarray(matrix), x=list(CHANNELS), y=list(CHANNELS),
                                     zmin=-1, zmax=1, colorscale='RdBu', showscale=col == len(panels)),
                          row=1, col=col)
        fig.update_layout(title_text=f"Channel Correlations - {report.method}")
        return fig

    def create_signal_overlay(self, clean, noisy, denoised, channel, seconds=None):
        """Overlay of one channel; seconds limits the plotted span"""
        n = clean.length if seconds is None else min(clean.length, int(seconds * clean.sample_rate))
        t = clean.time[:n]
        fig = go.Figure()
        fig.add_trace(go.Scatter(x=t, y=noisy.channel(channel)[:n], name='noisy',
                                 line=dict(color='#BBBBBB', width=1)))
        fig.add_trace(go.Scatter(x=t, y=clean.channel(channel)[:n], name='clean',
                                 line=dict(color='#4ECDC4')))
        fig.add_trace(go.Scatter(x=t, y=denoised.channel(channel)[:n], name='denoised',
                                 line=dict(color='#FF6B6B', dash='dash')))
        fig.update_layout(title=f"{channel} - {denoised.patient_id}",
                          xaxis_title="time (s)", yaxis_title=channel)
        return fig

    @staticmethod
    def save(fig, path):
        return write_atomic(path, fig.to_html(include_plotlyjs="cdn"))
