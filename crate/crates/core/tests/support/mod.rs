pub mod review_loop;
