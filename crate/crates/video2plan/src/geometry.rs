//! Axis-aligned box arithmetic shared by the association and fixture
//! stages.
//!
//! Boxes follow the common detector convention: `[x, y, w, h]` with the
//! origin at the top-left corner and `y` growing downwards. All routines
//! are generic over the scalar type so the same kernels serve `f32`
//! streams and `f64` evaluation code.

use num_traits::Float;
use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeTuple;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// Axis-aligned bounding box: top-left corner plus extent.
///
/// Serialized as the 4-tuple `[x, y, w, h]` to match detection-stream
/// records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Float> BoundingBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        BoundingBox { x, y, w, h }
    }

    /// Area of the box; zero for degenerate (non-positive) extents.
    pub fn area(&self) -> T {
        if self.w <= T::zero() || self.h <= T::zero() {
            T::zero()
        } else {
            self.w * self.h
        }
    }

    /// Centre point `(cx, cy)`.
    pub fn center(&self) -> (T, T) {
        let two = T::one() + T::one();
        (self.x + self.w / two, self.y + self.h / two)
    }

    /// Length of the box diagonal.
    pub fn diagonal(&self) -> T {
        (self.w * self.w + self.h * self.h).sqrt()
    }

    /// Area of overlap with `other`; zero when the boxes are disjoint.
    pub fn intersection_area(&self, other: &Self) -> T {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        if x1 <= x0 || y1 <= y0 {
            T::zero()
        } else {
            (x1 - x0) * (y1 - y0)
        }
    }

    /// Area covered by either box.
    pub fn union_area(&self, other: &Self) -> T {
        self.area() + other.area() - self.intersection_area(other)
    }

    /// Jaccard index (intersection over union). Zero when both boxes are
    /// degenerate, so it is always finite.
    pub fn jaccard(&self, other: &Self) -> T {
        let union = self.union_area(other);
        if union <= T::zero() {
            T::zero()
        } else {
            self.intersection_area(other) / union
        }
    }

    /// Euclidean distance between box centres.
    pub fn center_distance(&self, other: &Self) -> T {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        let dx = ax - bx;
        let dy = ay - by;
        (dx * dx + dy * dy).sqrt()
    }

    /// Grow the box by a fixed `delta` on every side, keeping the centre
    /// fixed. Used to give hand boxes a soft reach beyond their detected
    /// outline.
    pub fn expand_uniform(&self, delta: T) -> Self {
        let two = T::one() + T::one();
        BoundingBox {
            x: self.x - delta,
            y: self.y - delta,
            w: self.w + two * delta,
            h: self.h + two * delta,
        }
    }

    /// Clamp the box to the rectangle `[0, width] × [0, height]`.
    pub fn clamp_to(&self, width: T, height: T) -> Self {
        let x0 = self.x.max(T::zero()).min(width);
        let y0 = self.y.max(T::zero()).min(height);
        let x1 = (self.x + self.w).max(T::zero()).min(width);
        let y1 = (self.y + self.h).max(T::zero()).min(height);
        BoundingBox {
            x: x0,
            y: y0,
            w: (x1 - x0).max(T::zero()),
            h: (y1 - y0).max(T::zero()),
        }
    }

    /// True if all components are finite and the extents are
    /// non-negative.
    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w >= T::zero()
            && self.h >= T::zero()
    }
}

impl<T: Serialize> Serialize for BoundingBox<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut tup = serializer.serialize_tuple(4)?;
        tup.serialize_element(&self.x)?;
        tup.serialize_element(&self.y)?;
        tup.serialize_element(&self.w)?;
        tup.serialize_element(&self.h)?;
        tup.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for BoundingBox<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct BoxVisitor<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for BoxVisitor<T> {
            type Value = BoundingBox<T>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a [x, y, w, h] array")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let x = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let y = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                let w = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(2, &self))?;
                let h = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(3, &self))?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(5, &self));
                }
                Ok(BoundingBox { x, y, w, h })
            }
        }

        deserializer.deserialize_tuple(4, BoxVisitor(std::marker::PhantomData))
    }
}
