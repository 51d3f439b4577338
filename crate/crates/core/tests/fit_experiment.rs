mod common;

#[test]
fn desk_fit_reaches_psnr() {
    let (result, psnr) = common::desk_fit(2000);
    assert!(psnr >= 25.0, "{psnr}");
    assert!(common::windows_non_increasing(&result.losses));
}
