#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "rcbf/block.hpp"
#include "rcbf/model.hpp"
#include "rcbf/sigproc.hpp"

namespace rcbf {

struct ReceiveElement {
  enum class Kind { Point, Line };
  Kind kind = Kind::Point;
  /// Element position, or a point on the line axis.
  Vec3 position;
  /// Unit axis direction (Line only).
  Vec3 axis{0, 1, 0};
  double half_length = 0;
  uint32_t index = 0;
};

/// Array-frame element i of the transmitting or receiving side (a Line in RCA modes).
ReceiveElement rca_element(const ArrayGeometry& g, bool rows, uint32_t i);

/// Receive elements in the array frame. Hercules yields row_count x column_count points
/// ordered column fastest; other modes yield one Line per channel with channel_map applied.
std::vector<ReceiveElement> receive_aperture(const ArrayGeometry& g, const AcquisitionDescriptor& d);

/// Transmit models expressed in the array frame.
TransmitModel to_array_frame(const TransmitModel& m, const ArrayGeometry& g);

/// q and the model in the array frame.
double tof_transmit(const TransmitModel& m, Vec3 q, double c, const ArrayGeometry& g, bool transmit_rows = false);
double tof_receive(const ReceiveElement& e, Vec3 q, double c);
double apodization(const ReceiveElement& e, Vec3 q, double f_number);

/// Out-of-range taps contribute zero.
std::complex<double> interpolate(std::span<const cf32> samples, double t, Interpolation mode);

struct DasOptions {
  unsigned workers = 1;
  /// Skip zero-weight terms before touching trigonometry or data.
  bool apodization_skip = true;
};

/// Geometry resolved once per (descriptor, geometry, params): array-frame grid points, receive
/// elements, transmit models and the data offset of every (receive, transmit) term.
class DasPlan {
 public:
  DasPlan(const AcquisitionDescriptor& decoded, const ArrayGeometry& g, const BeamformParams& p);

  /// `block` must be sample-major and shaped like the decoded descriptor.
  ImageFrame run(const Block<cf32>& block, const DasOptions& options = {}) const;

  static constexpr uint32_t kTileX = 16;
  static constexpr uint32_t kTileY = 1;
  static constexpr uint32_t kTileZ = 16;

  struct Channel {
    ReceiveElement element;
    std::size_t base = 0;
    std::size_t stride = 0;
  };

  const std::vector<Channel>& channels() const { return channels_; }
  const std::vector<TransmitModel>& transmits() const { return transmits_; }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  friend ImageFrame das_reference(const Block<cf32>&, const AcquisitionDescriptor&, const ArrayGeometry&,
                                  const BeamformParams&);

  AcquisitionDescriptor descriptor_;
  ArrayGeometry geometry_;
  BeamformParams params_;
  std::vector<Vec3> points_;
  std::vector<Channel> channels_;
  std::vector<TransmitModel> transmits_;
  BlockShape shape_;
};

/// Transmit sequence used for a decoded descriptor: params.transmit if set, else the
/// descriptor's models, else one Element per decoded transmit.
std::vector<TransmitModel> resolve_transmits(const AcquisitionDescriptor& decoded, const BeamformParams& p);

ImageFrame das(const Block<cf32>& block, const AcquisitionDescriptor& decoded, const ArrayGeometry& g,
               const BeamformParams& p, const DasOptions& options = {});

/// Point-by-point evaluation without tiling or skipping.
ImageFrame das_reference(const Block<cf32>& block, const AcquisitionDescriptor& decoded, const ArrayGeometry& g,
                         const BeamformParams& p);

/// |value| per voxel.
std::vector<float> envelope(const ImageFrame& image);

/// Replaces each z line with the analytic signal of its real part. Used after RF beamforming.
ImageFrame analytic_along_z(const ImageFrame& image, const FirFilter& hilbert);

}  // namespace rcbf
