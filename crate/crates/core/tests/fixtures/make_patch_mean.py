"""Regenerates patch_mean.onnx: a 14-pixel patch-mean backbone with one
leading class token (all -1) and a fourth, always-zero channel."""
import torch


class PatchMean(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.conv = torch.nn.Conv2d(3, 4, kernel_size=14, stride=14, bias=False)
        with torch.no_grad():
            self.conv.weight.zero_()
            for c in range(3):
                self.conv.weight[c, c] = 1.0 / 196

    def forward(self, x):
        y = self.conv(x).flatten(2).transpose(1, 2)
        cls = torch.zeros_like(y[:, :1, :]) - 1
        return torch.cat([cls, y], 1)


if __name__ == "__main__":
    torch.onnx.export(
        PatchMean(),
        torch.zeros(1, 3, 28, 28),
        "patch_mean.onnx",
        input_names=["x"],
        output_names=["t"],
        dynamic_axes={"x": {2: "h", 3: "w"}, "t": {1: "n"}},
        opset_version=13,
        dynamo=False,
    )
